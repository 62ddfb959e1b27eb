"""Problem instances: cost, constraint terms and the target side of each term.

The target measure mu is never represented jointly.  Each constraint term
carries its own :class:`TargetSide`, either a sampler for the pushforward of
mu under that term's transform, or the marker that the mu-side integral
vanishes identically (martingale terms).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from .autodiff import Node, pos, rowsum, square, tanh


# samplers -----------------------------------------------------------------------

class Sampler:
    dim = 1

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class Sampler1D(Sampler):
    """One-dimensional law with cdf/ppf and partial first moments (used by the LP oracle)."""

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, q):
        raise NotImplementedError

    def partial_expectation(self, a, b):
        """Integral of x dF(x) over (a, b]."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def var(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Normal(Sampler1D):
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"Normal scale must be > 0, got {self.scale}")

    def sample(self, n, rng):
        return rng.normal(self.loc, self.scale, size=(n, 1))

    def cdf(self, x):
        return special.ndtr((np.asarray(x) - self.loc) / self.scale)

    def ppf(self, q):
        return self.loc + self.scale * special.ndtri(q)

    def partial_expectation(self, a, b):
        za = (np.asarray(a, dtype=float) - self.loc) / self.scale
        zb = (np.asarray(b, dtype=float) - self.loc) / self.scale
        mass = special.ndtr(zb) - special.ndtr(za)
        return self.loc * mass + self.scale * (stats.norm.pdf(za) - stats.norm.pdf(zb))

    @property
    def mean(self):
        return self.loc

    @property
    def var(self):
        return self.scale ** 2

    def to_config(self):
        return {"kind": "normal", "mean": self.loc, "std": self.scale}


@dataclass(frozen=True)
class NormalMixture(Sampler1D):
    weights: tuple
    locs: tuple
    scales: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(self.weights) == len(self.locs) == len(self.scales)) or len(w) == 0:
            raise ValueError("mixture weights/means/stds must have equal nonzero length")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-12):
            raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {self.weights}")
        if any(s <= 0 for s in self.scales):
            raise ValueError("mixture stds must be > 0")

    @property
    def components(self):
        return [Normal(m, s) for m, s in zip(self.locs, self.scales)]

    def sample(self, n, rng):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal(n)
        locs = np.asarray(self.locs)[comp]
        scales = np.asarray(self.scales)[comp]
        return (locs + scales * z)[:, None]

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def ppf(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        lo = min(m - 40 * s for m, s in zip(self.locs, self.scales))
        hi = max(m + 40 * s for m, s in zip(self.locs, self.scales))
        out = np.empty_like(q)
        for i, qi in enumerate(q):
            if qi <= 0:
                out[i] = -np.inf
            elif qi >= 1:
                out[i] = np.inf
            else:
                out[i] = optimize.brentq(lambda x: float(self.cdf(x)) - qi, lo, hi, xtol=1e-14)
        return out

    def partial_expectation(self, a, b):
        return sum(w * c.partial_expectation(a, b) for w, c in zip(self.weights, self.components))

    @property
    def mean(self):
        return float(np.dot(self.weights, self.locs))

    @property
    def var(self):
        w, m, s = (np.asarray(v, dtype=float) for v in (self.weights, self.locs, self.scales))
        return float(np.dot(w, s ** 2 + m ** 2) - np.dot(w, m) ** 2)

    def to_config(self):
        return {"kind": "normal_mixture", "weights": list(self.weights),
                "means": list(self.locs), "stds": list(self.scales)}


@dataclass(frozen=True)
class StudentT(Sampler1D):
    df: float = 8.0

    def __post_init__(self):
        if not self.df > 2:
            raise ValueError(f"Student-t needs df > 2 for a finite variance, got {self.df}")

    def sample(self, n, rng):
        z = rng.standard_normal(n)
        if float(self.df).is_integer():
            chi2 = np.square(rng.standard_normal((n, int(self.df)))).sum(axis=1)
        else:
            chi2 = rng.chisquare(self.df, size=n)
        return (z / np.sqrt(chi2 / self.df))[:, None]

    def cdf(self, x):
        return stats.t.cdf(x, self.df)

    def ppf(self, q):
        return stats.t.ppf(q, self.df)

    def partial_expectation(self, a, b):
        # d/dx [-(df + x^2)/(df - 1) * pdf(x)] = x * pdf(x)
        def prim(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(invalid="ignore"):
                v = -(self.df + x * x) / (self.df - 1) * stats.t.pdf(x, self.df)
            return np.where(np.isfinite(x), v, 0.0)

        return prim(b) - prim(a)

    @property
    def mean(self):
        return 0.0

    @property
    def var(self):
        return self.df / (self.df - 2)

    def to_config(self):
        return {"kind": "student_t", "df": self.df}


@dataclass(frozen=True)
class UniformBox(Sampler):
    low: tuple
    high: tuple

    @property
    def dim(self):
        return len(self.low)

    def sample(self, n, rng):
        return rng.uniform(np.asarray(self.low), np.asarray(self.high), size=(n, self.dim))

    def to_config(self):
        return {"kind": "uniform", "low": list(self.low), "high": list(self.high)}


@dataclass(frozen=True)
class IndependentNormal(Sampler):
    """Product of one-dimensional normals."""
    locs: tuple
    scales: tuple

    @property
    def dim(self):
        return len(self.locs)

    def sample(self, n, rng):
        return np.asarray(self.locs) + np.asarray(self.scales) * rng.standard_normal((n, self.dim))

    def to_config(self):
        return {"kind": "independent_normal", "means": list(self.locs), "stds": list(self.scales)}


def sampler_from_config(cfg: dict) -> Sampler:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    builders = {
        "normal": lambda c: Normal(float(c.pop("mean", 0.0)), float(c.pop("std"))),
        "normal_mixture": lambda c: NormalMixture(tuple(c.pop("weights")), tuple(c.pop("means")),
                                                  tuple(c.pop("stds"))),
        "student_t": lambda c: StudentT(float(c.pop("df"))),
        "uniform": lambda c: UniformBox(tuple(c.pop("low")), tuple(c.pop("high"))),
        "independent_normal": lambda c: IndependentNormal(tuple(c.pop("means")), tuple(c.pop("stds"))),
    }
    if kind not in builders:
        raise ValueError(f"unknown sampler kind {kind!r}")
    try:
        sampler = builders[kind](cfg)
    except KeyError as exc:
        raise ValueError(f"sampler {kind!r} is missing field {exc}") from None
    if cfg:
        raise ValueError(f"unknown keys for sampler {kind!r}: {sorted(cfg)}")
    return sampler


# constraint terms -----------------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    """e_j: constant one, or the coordinate difference x_b - x_a."""
    kind: str = "one"
    a: int = 0
    b: int = 1

    def __post_init__(self):
        if self.kind not in ("one", "diff"):
            raise ValueError(f"unknown weight kind {self.kind!r}")

    def __call__(self, x):
        if self.kind == "one":
            return None
        return x[:, self.b] - x[:, self.a]

    @property
    def nonnegative(self):
        return self.kind == "one"

    def to_config(self):
        return {"kind": "one"} if self.kind == "one" else {"kind": "diff", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Transform:
    """pi_j: coordinate projection, coordinate difference x_b - x_a, or identity."""
    kind: str = "proj"
    idx: tuple = (0,)
    a: int = 0
    b: int = 1

    def __post_init__(self):
        if self.kind not in ("proj", "diff", "identity"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "proj" and len(self.idx) == 0:
            raise ValueError("projection needs at least one index")

    def dim(self, d: int) -> int:
        if self.kind == "proj":
            return len(self.idx)
        if self.kind == "diff":
            return 1
        return d

    def __call__(self, x):
        if self.kind == "identity":
            return x
        if self.kind == "proj":
            if list(self.idx) == list(range(self.idx[0], self.idx[0] + len(self.idx))):
                return x[:, self.idx[0]: self.idx[0] + len(self.idx)]
            return x[:, list(self.idx)]
        return x[:, self.b: self.b + 1] - x[:, self.a: self.a + 1]

    def max_index(self) -> int:
        if self.kind == "proj":
            return max(self.idx)
        if self.kind == "diff":
            return max(self.a, self.b)
        return -1

    def to_config(self):
        if self.kind == "proj":
            return {"kind": "proj", "idx": list(self.idx)}
        if self.kind == "diff":
            return {"kind": "diff", "a": self.a, "b": self.b}
        return {"kind": "identity"}


class _AnalyticZero:
    def __repr__(self):
        return "ANALYTIC_ZERO"


ANALYTIC_ZERO = _AnalyticZero()


@dataclass(frozen=True)
class TargetSide:
    kind: str
    sampler: Sampler | None = None

    def __post_init__(self):
        if self.kind == "sampler" and self.sampler is None:
            raise ValueError("sampler target needs a sampler")
        if self.kind not in ("sampler", "analytic_zero"):
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def of(cls, sampler: Sampler) -> "TargetSide":
        return cls("sampler", sampler)

    @classmethod
    def zero(cls) -> "TargetSide":
        return cls("analytic_zero")

    def to_config(self):
        return {"kind": "analytic_zero"} if self.kind == "analytic_zero" else self.sampler.to_config()


@dataclass(frozen=True)
class ConstraintTerm:
    weight: Weight
    transform: Transform
    dim: int
    target: TargetSide
    name: str = ""

    def to_config(self):
        return {"name": self.name, "weight": self.weight.to_config(),
                "transform": self.transform.to_config(), "target": self.target.to_config()}


def sample_mu_side(term: ConstraintTerm, n: int, rng: np.random.Generator):
    """n draws of the term's target, or ANALYTIC_ZERO when the mu-side vanishes."""
    if term.target.kind == "analytic_zero":
        return ANALYTIC_ZERO
    return term.target.sampler.sample(n, rng)


# costs --------------------------------------------------------------------------

_EXPR_FUNCS = {"pos": pos, "relu": pos, "square": square, "tanh": tanh}


def _compile_expr(expr: str, d: int) -> Callable:
    """Compile a scalar expression over x0..x{d-1} (or x[i]) into a batch function.

    Allowed: numbers, + - *, unary minus, and pos/relu/square/tanh calls.  The
    result works on numpy batches and tape nodes alike.
    """
    tree = ast.parse(expr, mode="eval")

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda x: v
        if isinstance(node, ast.Name):
            if node.id.startswith("x") and node.id[1:].isdigit():
                i = int(node.id[1:])
                if i >= d:
                    raise ValueError(f"{node.id} out of range for d={d}")
                return lambda x: x[:, i]
            raise ValueError(f"unknown name {node.id!r} in cost expression")
        if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name) \
                and node.value.id == "x" and isinstance(node.slice, ast.Constant):
            i = int(node.slice.value)
            if not 0 <= i < d:
                raise ValueError(f"x[{i}] out of range for d={d}")
            return lambda x: x[:, i]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            return (lambda x: -inner(x)) if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
            lhs, rhs = build(node.left), build(node.right)
            if isinstance(node.op, ast.Add):
                return lambda x: lhs(x) + rhs(x)
            if isinstance(node.op, ast.Sub):
                return lambda x: lhs(x) - rhs(x)
            return lambda x: lhs(x) * rhs(x)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _EXPR_FUNCS and len(node.args) == 1 and not node.keywords:
            fn, arg = _EXPR_FUNCS[node.func.id], build(node.args[0])
            return lambda x: fn(arg(x))
        raise ValueError(f"unsupported construct in cost expression: {ast.dump(node)}")

    body = build(tree)

    def cost(x):
        out = body(x)
        if isinstance(out, float):
            if isinstance(x, Node):
                return x.tape.constant(np.full(x.shape[0], out))
            return np.full(x.shape[0], out)
        return out

    return cost


@dataclass(frozen=True)
class Cost:
    """Cost f, evaluated row-wise on numpy batches or tape nodes."""
    kind: str
    d: int
    expr: str = ""

    def __post_init__(self):
        if self.kind not in ("call_sum", "forward_call", "neg_sq_dist", "expr", "zero"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "neg_sq_dist" and self.d % 2:
            raise ValueError("neg_sq_dist needs an even ambient dimension")
        if self.kind == "expr":
            _compile_expr(self.expr, self.d)

    def __call__(self, x):
        if self.kind == "call_sum":
            return pos(x[:, 0] + x[:, 1])
        if self.kind == "forward_call":
            return pos(x[:, 1] - x[:, 0])
        if self.kind == "neg_sq_dist":
            h = self.d // 2
            return -rowsum(square(x[:, :h] - x[:, h:]))
        if self.kind == "zero":
            return x[:, 0] * 0.0
        return _compile_expr(self.expr, self.d)(x)

    @property
    def lipschitz(self) -> float | None:
        return {"call_sum": math.sqrt(2.0), "forward_call": math.sqrt(2.0), "zero": 0.0}.get(self.kind)

    def to_config(self):
        out = {"kind": self.kind}
        if self.kind == "expr":
            out["expr"] = self.expr
        return out


@dataclass(frozen=True)
class LatentSpec:
    dim: int
    kind: str = "uniform"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dimension must be >= 1")
        if self.kind not in ("uniform", "normal"):
            raise ValueError(f"latent kind must be uniform or normal, got {self.kind!r}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-1.0, 1.0, size=(n, self.dim))
        return rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    d: int
    cost: Cost
    terms: tuple
    latent: LatentSpec
    support_box: tuple | None = None
    value_sign: float = 1.0  # reported value = value_sign * objective
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a problem needs at least one constraint term")
        for j, t in enumerate(self.terms):
            if t.transform.dim(self.d) != t.dim:
                raise ValueError(f"term {j}: transform image dim {t.transform.dim(self.d)} != {t.dim}")
            if t.transform.max_index() >= self.d:
                raise ValueError(f"term {j}: transform index out of range for d={self.d}")
            if t.target.kind == "sampler" and t.target.sampler.dim != t.dim:
                raise ValueError(f"term {j}: target dim {t.target.sampler.dim} != {t.dim}")
            if t.target.kind == "sampler" and t.weight.kind != "one":
                raise ValueError(f"term {j}: sampled targets require weight e = 1")
        if self.support_box is not None and np.shape(self.support_box) != (self.d, 2):
            raise ValueError(f"support_box must have shape ({self.d}, 2)")

    @property
    def J(self) -> int:
        return len(self.terms)

    def to_config(self) -> dict:
        return {
            "name": self.name, "d": self.d, "cost": self.cost.to_config(),
            "terms": [t.to_config() for t in self.terms],
            "latent": {"dim": self.latent.dim, "kind": self.latent.kind},
            "support_box": None if self.support_box is None else [list(r) for r in self.support_box],
            "value_sign": self.value_sign,
        }


# presets ------------------------------------------------------------------------

def _proj(i, target, name):
    return ConstraintTerm(Weight("one"), Transform("proj", (i,)), 1, TargetSide.of(target), name)


def preset_ot(mu1: Sampler1D, mu2: Sampler1D, cost: str = "call_sum", latent_dim: int = 2) -> ProblemInstance:
    return ProblemInstance("ot", 2, Cost(cost, 2), (_proj(0, mu1, "x1"), _proj(1, mu2, "x2")),
                           LatentSpec(latent_dim))


def preset_multi_marginal(marginals: Sequence[Sampler1D], cost: Cost | str = "expr",
                          expr: str = "", latent_dim: int | None = None) -> ProblemInstance:
    d = len(marginals)
    if isinstance(cost, str):
        cost = Cost(cost, d, expr)
    terms = tuple(_proj(i, m, f"x{i + 1}") for i, m in enumerate(marginals))
    return ProblemInstance("multi_marginal", d, cost, terms, LatentSpec(latent_dim or d))


DCOT_MARGINAL = Normal(0.0, 2.0)
DCOT_KAPPA = StudentT(8.0)
MOT_MU1 = NormalMixture((0.5, 0.5), (-1.3, 0.8), (0.5, 0.7))
MOT_MU2 = NormalMixture((0.5, 0.5), (-1.3, 0.8), (1.1, 1.3))


def preset_dcot() -> ProblemInstance:
    terms = (
        _proj(0, DCOT_MARGINAL, "x1"),
        _proj(1, DCOT_MARGINAL, "x2"),
        ConstraintTerm(Weight("one"), Transform("diff", a=0, b=1), 1, TargetSide.of(DCOT_KAPPA),
                       "x2-x1"),
    )
    return ProblemInstance("dcot", 2, Cost("call_sum", 2), terms, LatentSpec(2))


def preset_mot(support_box=None) -> ProblemInstance:
    terms = (
        _proj(0, MOT_MU1, "x1"),
        _proj(1, MOT_MU2, "x2"),
        ConstraintTerm(Weight("diff", a=0, b=1), Transform("proj", (0,)), 1, TargetSide.zero(),
                       "martingale"),
    )
    box = None if support_box is None else tuple(tuple(r) for r in support_box)
    return ProblemInstance("mot", 2, Cost("forward_call", 2), terms, LatentSpec(2), box)


def preset_w2(d: int = 1, var1: float = 1.0, var2: float = 4.0) -> ProblemInstance:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    s1, s2 = math.sqrt(var1), math.sqrt(var2)
    terms = (
        ConstraintTerm(Weight("one"), Transform("proj", tuple(range(d))), d,
                       TargetSide.of(IndependentNormal((0.0,) * d, (s1,) * d)), "x1"),
        ConstraintTerm(Weight("one"), Transform("proj", tuple(range(d, 2 * d))), d,
                       TargetSide.of(IndependentNormal((0.0,) * d, (s2,) * d)), "x2"),
    )
    return ProblemInstance("w2", 2 * d, Cost("neg_sq_dist", 2 * d), terms, LatentSpec(2 * d),
                           value_sign=-1.0, meta={"exact": d * (s1 - s2) ** 2})


PRESETS = {
    "dcot": lambda **kw: preset_dcot(),
    "mot": lambda support_box=None, **kw: preset_mot(support_box),
    "w2": lambda dim=1, **kw: preset_w2(dim),
    "ot": lambda **kw: preset_ot(DCOT_MARGINAL, DCOT_MARGINAL),
}


def problem_from_config(cfg: dict) -> ProblemInstance:
    """Build a problem from a preset name or an explicit JSON-style dict."""
    cfg = dict(cfg)
    if "preset" in cfg:
        name = cfg.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        allowed = {"dim", "support_box"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown keys for preset problem: {sorted(unknown)}")
        return PRESETS[name](**cfg)
    allowed = {"name", "d", "cost", "terms", "latent", "support_box", "value_sign"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown problem keys: {sorted(unknown)}")
    try:
        d = int(cfg["d"])
        cost_cfg = dict(cfg["cost"])
        cost = Cost(cost_cfg.pop("kind"), d, cost_cfg.pop("expr", ""))
        if cost_cfg:
            raise ValueError(f"unknown cost keys: {sorted(cost_cfg)}")
        terms = []
        for j, tc in enumerate(cfg["terms"]):
            tc = dict(tc)
            w = dict(tc.pop("weight", {"kind": "one"}))
            tr = dict(tc.pop("transform"))
            tg = dict(tc.pop("target"))
            name = tc.pop("name", f"term{j + 1}")
            if tc:
                raise ValueError(f"term {j}: unknown keys {sorted(tc)}")
            weight = Weight(w.pop("kind"), int(w.pop("a", 0)), int(w.pop("b", 1)))
            tkind = tr.pop("kind")
            transform = Transform(tkind, tuple(int(i) for i in tr.pop("idx", (0,))),
                                  int(tr.pop("a", 0)), int(tr.pop("b", 1)))
            if w or tr:
                raise ValueError(f"term {j}: unknown weight/transform keys {sorted(w) + sorted(tr)}")
            target = TargetSide.zero() if tg.get("kind") == "analytic_zero" \
                else TargetSide.of(sampler_from_config(tg))
            terms.append(ConstraintTerm(weight, transform, transform.dim(d), target, name))
        lat = dict(cfg.get("latent", {"dim": d}))
        latent = LatentSpec(int(lat.pop("dim", d)), lat.pop("kind", "uniform"))
        if lat:
            raise ValueError(f"unknown latent keys: {sorted(lat)}")
    except KeyError as exc:
        raise ValueError(f"problem config is missing {exc}") from None
    box = cfg.get("support_box")
    box = None if box is None else tuple(tuple(float(v) for v in r) for r in box)
    return ProblemInstance(cfg.get("name", "custom"), d, cost, tuple(terms), latent, box,
                           float(cfg.get("value_sign", 1.0)))
