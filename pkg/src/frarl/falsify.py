"""Falsification by robustness minimization.

The cross-entropy falsifier keeps an independent truncated Gaussian per search
dimension.  The first batch is drawn uniformly within the bounds; afterwards
the proposal is refit to the elite (least robust) samples by maximum
likelihood and blended with the previous parameters.  The uniform falsifier
draws every batch uniformly and never adapts.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .mtl import Formula, Trace, robustness

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A black-box rollout failed; ``candidate`` is the offending input."""

    def __init__(self, candidate: np.ndarray, cause: BaseException):
        self.candidate = np.array(candidate, dtype=float)
        super().__init__(f"simulation failed for candidate {self.candidate.tolist()}: {cause!r}")


@dataclass(frozen=True)
class SearchSpace:
    """Box of initial conditions and input-trace control points.

    Dimensions are ordered scalars first, then the ``n_control`` control
    points of the input trace.
    """

    names: Tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    n_control: int

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", tuple(self.names))
        if not (len(self.names) == lower.shape[0] == upper.shape[0]):
            raise ValueError("names and bounds differ in length")
        if np.any(~(lower < upper)):
            bad = [n for n, lo, hi in zip(self.names, lower, upper) if not lo < hi]
            raise ValueError(f"empty bounds for {bad}")
        if self.n_control < 1 or self.n_control > len(self.names):
            raise ValueError("n_control must be within 1..dim")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.width


@dataclass(frozen=True)
class CeDistribution:
    """Independent truncated Gaussians on ``[lower, upper]``.

    While ``uniform`` is set, :func:`sample_candidates` draws uniformly; ``mean``
    and ``std`` then hold the moments of the uniform distribution.
    """

    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    uniform: bool = False

    @classmethod
    def uniform_over(cls, space: SearchSpace) -> "CeDistribution":
        return cls(
            space.lower.copy(),
            space.upper.copy(),
            (space.lower + space.upper) / 2,
            space.width / math.sqrt(12.0),
            uniform=True,
        )


def sample_candidates(dist: CeDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points within the bounds (inverse-CDF truncation)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    d = len(dist.mean)
    if dist.uniform:
        return dist.lower + rng.random((n, d)) * (dist.upper - dist.lower)
    std = np.maximum(dist.std, np.finfo(float).tiny)
    lo_cdf = ndtr((dist.lower - dist.mean) / std)
    hi_cdf = ndtr((dist.upper - dist.mean) / std)
    u = lo_cdf + rng.random((n, d)) * (hi_cdf - lo_cdf)
    z = ndtri(np.clip(u, 1e-300, 1 - 1e-16))
    x = dist.mean + std * z
    # both CDFs saturated (mean far in a tail): fall back to the nearest bound
    x = np.where(np.isfinite(x), x, dist.mean)
    return np.clip(x, dist.lower, dist.upper)


def ce_update(
    dist: CeDistribution,
    candidates: np.ndarray,
    scores: np.ndarray,
    elite_fraction: float,
    smoothing: float,
    std_floor: float = 1e-3,
) -> CeDistribution:
    """Refit the proposal to the ``ceil(elite_fraction * n)`` lowest scores.

    The elite mean and (maximum-likelihood) standard deviation are blended
    with the old parameters: ``new = smoothing * elite + (1 - smoothing) * old``.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    scores = np.asarray(scores, dtype=float)
    if len(scores) == 0 or len(scores) != len(candidates):
        raise ValueError("need one score per candidate and at least one candidate")
    if not 0 < elite_fraction <= 1:
        raise ValueError("elite_fraction must be in (0, 1]")
    if not 0 <= smoothing <= 1:
        raise ValueError("smoothing must be in [0, 1]")
    if smoothing == 0:
        return dist
    m = max(1, math.ceil(elite_fraction * len(scores) - 1e-9))
    elite = candidates[np.argsort(scores, kind="stable")[:m]]
    mean = smoothing * elite.mean(axis=0) + (1 - smoothing) * dist.mean
    std = smoothing * elite.std(axis=0) + (1 - smoothing) * dist.std
    mean = np.clip(mean, dist.lower, dist.upper)
    return CeDistribution(dist.lower, dist.upper, mean, np.maximum(std, std_floor), uniform=False)


@dataclass
class CeConfig:
    n_samples: int = 50
    elite_fraction: float = 0.1
    smoothing: float = 0.7
    # None lets the budget alone bound the search
    iterations: Optional[int] = 20
    std_floor: float = 1e-3
    # stop once every std is below this fraction of its dimension's width
    convergence_tol: float = 1e-2
    # stop once this many candidates with negative robustness were found
    min_falsified: int = 1


@dataclass
class FalsificationResult:
    best_candidate: np.ndarray
    best_robustness: float
    simulations_used: int
    robustness_history: List[float]
    candidates: np.ndarray
    robustness: np.ndarray
    first_falsified_at: Optional[int] = None
    iterations: List[dict] = field(default_factory=list)

    @property
    def falsified(self) -> bool:
        return self.best_robustness < 0

    def best(self, n: int) -> List[Tuple[np.ndarray, float]]:
        """The ``n`` least robust distinct evaluated candidates, ascending."""
        order = np.argsort(self.robustness, kind="stable")
        out: List[Tuple[np.ndarray, float]] = []
        seen = set()
        for i in order:
            key = self.candidates[i].tobytes()
            if key in seen:
                continue
            seen.add(key)
            out.append((self.candidates[i].copy(), float(self.robustness[i])))
            if len(out) == n:
                break
        return out


def _rollout_all(system, candidates: np.ndarray) -> List[Trace]:
    batch = getattr(system, "batch", None)
    if batch is not None:
        try:
            return list(batch(candidates))
        except Exception:
            pass  # rerun one by one to find the offender
    traces = []
    for c in candidates:
        try:
            traces.append(system(c))
        except Exception as exc:
            raise SimulationError(c, exc) from exc
    return traces


def robustness_objective(system, formula: Formula) -> Callable[[np.ndarray], np.ndarray]:
    """Batch objective: robustness at step 0 of each candidate's trace."""

    def objective(candidates: np.ndarray) -> np.ndarray:
        traces = _rollout_all(system, candidates)
        return np.array([robustness(formula, tr, 0) for tr in traces], dtype=float)

    return objective


def _search(
    objective: Callable[[np.ndarray], np.ndarray],
    space: SearchSpace,
    budget: int,
    cfg: CeConfig,
    rng: np.random.Generator,
    adapt: bool,
) -> Tuple[FalsificationResult, CeDistribution]:
    if budget < cfg.n_samples:
        raise ValueError(f"budget {budget} is smaller than the batch size {cfg.n_samples}")
    dist = CeDistribution.uniform_over(space)
    all_c: List[np.ndarray] = []
    all_r: List[np.ndarray] = []
    history: List[float] = []
    rows: List[dict] = []
    used = 0
    first_hit: Optional[int] = None
    best = math.inf
    best_c = None
    it = 0
    while used + cfg.n_samples <= budget and (cfg.iterations is None or it < cfg.iterations):
        cands = sample_candidates(dist, cfg.n_samples, rng)
        scores = np.asarray(objective(cands), dtype=float)
        if first_hit is None and np.any(scores < 0):
            first_hit = used + int(np.argmax(scores < 0)) + 1
        used += len(cands)
        all_c.append(cands)
        all_r.append(scores)
        i = int(np.argmin(scores))
        if best_c is None or scores[i] < best:
            best, best_c = float(scores[i]), cands[i].copy()
        history.append(best)
        finite = scores[np.isfinite(scores)]
        rows.append(
            {
                "iteration": it,
                "best_robustness": best,
                "mean_robustness": float(finite.mean()) if len(finite) else math.inf,
                "mean": dist.mean.copy(),
                "std": dist.std.copy(),
            }
        )
        log.debug("iteration %d: best %.4g after %d simulations", it, best, used)
        it += 1
        n_hits = int(sum(np.count_nonzero(r < 0) for r in all_r))
        if n_hits >= cfg.min_falsified:
            break
        if adapt:
            dist = ce_update(dist, cands, scores, cfg.elite_fraction, cfg.smoothing, cfg.std_floor)
            if np.all(dist.std < cfg.convergence_tol * space.width):
                break
    result = FalsificationResult(
        best_candidate=best_c,
        best_robustness=best,
        simulations_used=used,
        robustness_history=history,
        candidates=np.concatenate(all_c),
        robustness=np.concatenate(all_r),
        first_falsified_at=first_hit,
        iterations=rows,
    )
    return result, dist


def cross_entropy_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    space: SearchSpace,
    budget: int,
    cfg: Optional[CeConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[FalsificationResult, CeDistribution]:
    """Minimize a batch objective over ``space``; returns the result and final proposal."""
    cfg = cfg or CeConfig()
    rng = rng if rng is not None else np.random.default_rng()
    return _search(objective, space, budget, cfg, rng, adapt=True)


def falsify(
    system,
    formula: Formula,
    space: SearchSpace,
    budget: int,
    cfg: Optional[CeConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> FalsificationResult:
    """Cross-entropy search for inputs whose trace violates ``formula``.

    ``system`` maps a candidate vector to a :class:`Trace`; if it also has a
    ``batch`` method, whole batches are simulated at once.
    """
    result, _ = cross_entropy_minimize(robustness_objective(system, formula), space, budget, cfg, rng)
    return result


def uniform_falsify(
    system,
    formula: Formula,
    space: SearchSpace,
    budget: int,
    rng: Optional[np.random.Generator] = None,
    cfg: Optional[CeConfig] = None,
) -> FalsificationResult:
    """Naive baseline: uniform batches, no proposal update."""
    cfg = cfg or CeConfig()
    rng = rng if rng is not None else np.random.default_rng()
    result, _ = _search(robustness_objective(system, formula), space, budget, cfg, rng, adapt=False)
    return result


def write_report(result: FalsificationResult, space: SearchSpace, path) -> None:
    """One row per iteration: best/mean robustness and per-dimension mean/std."""
    header = ["iteration", "best_robustness", "mean_robustness"]
    header += [f"mean_{n}" for n in space.names] + [f"std_{n}" for n in space.names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in result.iterations:
            w.writerow(
                [row["iteration"], repr(float(row["best_robustness"])), repr(float(row["mean_robustness"]))]
                + [repr(float(x)) for x in row["mean"]]
                + [repr(float(x)) for x in row["std"]]
            )
