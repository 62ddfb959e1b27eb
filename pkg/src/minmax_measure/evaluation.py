"""Post-training diagnostics: Monte-Carlo values, Chebyshev feasibility errors, trace stats."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trainer import running_return, stability_metric

N_POLY = 50
HALF_WIDTH = 6.0
EVAL_SEED = 20_240_601


def chebyshev(j: int, x) -> np.ndarray:
    """Degree-j Chebyshev polynomial of the first kind on [-6, 6], via the recurrence.

    Not clamped: arguments outside [-6, 6] are evaluated as they are.
    """
    if j < 0:
        raise ValueError(f"degree must be >= 0, got {j}")
    t = np.asarray(x, dtype=np.float64) / HALF_WIDTH
    prev, cur = np.ones_like(t), t
    if j == 0:
        return prev
    for _ in range(j - 1):
        prev, cur = cur, 2.0 * t * cur - prev
    return cur


def chebyshev_matrix(x, degree: int = N_POLY) -> np.ndarray:
    """Rows g_1(x), ..., g_degree(x); shape (degree, len(x))."""
    t = np.asarray(x, dtype=np.float64).ravel() / HALF_WIDTH
    out = np.empty((degree, t.size))
    prev = np.ones_like(t)
    out[0] = t
    for k in range(1, degree):
        out[k] = 2.0 * t * out[k - 1] - prev
        prev = out[k - 1]
    return out


def _prepare(x, clamp: bool):
    x = np.asarray(x, dtype=np.float64).ravel()
    return np.clip(x, -HALF_WIDTH, HALF_WIDTH) if clamp else x


@dataclass
class FeasibilityReport:
    marginal_error: float
    martingale_error: float | None
    marginal_per_poly: np.ndarray = field(repr=False)
    martingale_per_poly: np.ndarray | None = field(repr=False, default=None)
    n: int = 0
    clamp: bool = True

    def __post_init__(self):
        if self.marginal_error < 0 or (self.martingale_error is not None and self.martingale_error < 0):
            raise ValueError("feasibility errors are absolute values and must be >= 0")

    def to_dict(self) -> dict:
        return {
            "marginal_error": self.marginal_error,
            "martingale_error": self.martingale_error,
            "marginal_per_poly": np.asarray(self.marginal_per_poly).tolist(),
            "martingale_per_poly": None if self.martingale_per_poly is None
            else np.asarray(self.martingale_per_poly).tolist(),
            "n": self.n,
            "clamp": self.clamp,
        }


def marginal_error_terms(generated, targets, degree: int = N_POLY, clamp: bool = True) -> np.ndarray:
    """|mean g_j(target_i) - mean g_j(generated_i)|, shape (n_marginals, degree).

    ``generated`` is (n, k); ``targets`` is a list of k 1-D sample arrays.
    ``clamp`` clips samples into [-6, 6] before evaluating the polynomials.
    """
    generated = np.asarray(generated, dtype=np.float64)
    if generated.ndim == 1:
        generated = generated[:, None]
    if generated.shape[1] != len(targets):
        raise ValueError(f"{generated.shape[1]} generated marginals vs {len(targets)} targets")
    rows = []
    for i, tgt in enumerate(targets):
        g_mu = chebyshev_matrix(_prepare(tgt, clamp), degree).mean(axis=1)
        g_nu = chebyshev_matrix(_prepare(generated[:, i], clamp), degree).mean(axis=1)
        rows.append(np.abs(g_mu - g_nu))
    return np.array(rows)


def marginal_error(generated, targets, degree: int = N_POLY, clamp: bool = True) -> float:
    """Average over marginals and polynomials of the moment mismatch."""
    return float(marginal_error_terms(generated, targets, degree, clamp).mean())


def martingale_error_terms(generated, degree: int = N_POLY, clamp: bool = True) -> np.ndarray:
    generated = np.asarray(generated, dtype=np.float64)
    if generated.ndim != 2 or generated.shape[1] != 2:
        raise ValueError(f"martingale error needs (n, 2) samples, got {generated.shape}")
    x1, x2 = generated[:, 0], generated[:, 1]
    g = chebyshev_matrix(_prepare(x1, clamp), degree)
    return np.abs((g * (x2 - x1)).mean(axis=1))


def martingale_error(generated, degree: int = N_POLY, clamp: bool = True) -> float:
    """Average over polynomials of |mean g_j(x1) (x2 - x1)|."""
    return float(martingale_error_terms(generated, degree, clamp).mean())


def sample_generator(gen, n: int = 100_000, seed: int = EVAL_SEED, latent=None) -> np.ndarray:
    """n samples of the pushforward, with an evaluation seed independent of training."""
    rng = np.random.default_rng(seed)
    if latent is None:
        z = rng.uniform(-1.0, 1.0, size=(n, gen.latent_dim))
    else:
        z = latent.sample(n, rng)
    return gen.generate(z, rng)


def objective_value(gen, f, n: int = 100_000, seed: int = EVAL_SEED, latent=None) -> float:
    """Monte-Carlo estimate of the integral of f under the generated law."""
    x = sample_generator(gen, n, seed, latent)
    return float(np.mean(f(x)))


def feasibility_report(samples, targets, martingale: bool = False, degree: int = N_POLY,
                       clamp: bool = True) -> FeasibilityReport:
    terms = marginal_error_terms(samples, targets, degree, clamp)
    mart = martingale_error_terms(samples, degree, clamp) if martingale else None
    return FeasibilityReport(float(terms.mean()), None if mart is None else float(mart.mean()),
                             terms, mart, int(np.asarray(samples).shape[0]), clamp)


def evaluate_mot(gen, problem, n: int = 100_000, seed: int = EVAL_SEED, clamp: bool = True) -> dict:
    """Integral value and both feasibility errors for a two-period martingale problem."""
    x = sample_generator(gen, n, seed, problem.latent)
    rng = np.random.default_rng(seed + 1)
    targets = [problem.terms[i].target.sampler.sample(n, rng).ravel() for i in range(2)]
    rep = feasibility_report(x, targets, martingale=True, clamp=clamp)
    return {"value": float(np.mean(problem.cost(x))), "marginal_error": rep.marginal_error,
            "martingale_error": rep.martingale_error, "n": n}


def trace_summary(phi, n_return: int, window: int) -> dict:
    phi = np.asarray(phi, dtype=float)
    return {
        "value": float(np.mean(phi[-n_return:])),
        "stability": stability_metric(phi, min(window, len(phi))),
        "final_running_return": float(running_return(phi, n_return)[-1]),
    }


__all__ = [
    "FeasibilityReport", "chebyshev", "chebyshev_matrix", "evaluate_mot", "feasibility_report",
    "marginal_error", "marginal_error_terms", "martingale_error", "martingale_error_terms",
    "objective_value", "sample_generator", "trace_summary",
]
