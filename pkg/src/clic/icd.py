"""Complexity distributions over a dataset: scoring, histograms, normal fits, strata."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import BadThresholds, InsufficientData, UnknownScorer
from .finetune_eval import RegressionHead, predict_ic
from .heuristics import LEARNED_SCORERS, get_scorer
from .imagecore import load_image
from .manifest import Manifest, ManifestEntry
from .nn import EncoderParams

log = logging.getLogger(__name__)


@dataclass
class ScoredManifest:
    scorer: str
    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)


@dataclass(frozen=True)
class NormalFit:
    mu: float
    sigma: float
    n: int
    ks: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "n": self.n, "ks": self.ks, "degenerate": self.degenerate}


def score_dataset(
    manifest: Manifest,
    scorer: str,
    encoder: EncoderParams | None = None,
    head: RegressionHead | None = None,
    jobs: int = 1,
) -> ScoredManifest:
    if scorer in LEARNED_SCORERS:
        if encoder is None or head is None:
            raise ValueError(f"scorer {scorer!r} needs an encoder and a head")
        fn = lambda img: predict_ic(encoder, head, img)  # noqa: E731
    else:
        fn = get_scorer(scorer)

    def work(entry: ManifestEntry):
        try:
            return min(1.0, max(0.0, float(fn(load_image(entry.path))))), None
        except UnknownScorer:
            raise
        except Exception as exc:
            log.warning("could not score %s: %s", entry.path, exc)
            return None, {"path": entry.path, "error": f"{type(exc).__name__}: {exc}"}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, manifest.entries))
    else:
        results = [work(e) for e in manifest]

    out = ScoredManifest(scorer)
    for entry, (score, failure) in zip(manifest, results):
        if failure is not None:
            out.skipped.append(failure)
        else:
            out.entries.append(ManifestEntry(entry.path, score, entry.id))
    return out


def histogram(scores, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Counts over ``bins`` equal-width bins on [0, 1]; 1.0 lands in the last bin."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    s = np.asarray(scores, dtype=np.float64).ravel()
    idx = np.clip(np.floor(s * bins).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return counts, edges


def histogram_mode(counts: np.ndarray, edges: np.ndarray) -> float:
    """Centre of the most populated bin."""
    i = int(np.argmax(counts))
    return float((edges[i] + edges[i + 1]) / 2)


def ks_statistic(scores, mu: float, sigma: float) -> float:
    """Two-sided sup distance between the empirical CDF and N(mu, sigma^2)."""
    x = np.sort(np.asarray(scores, dtype=np.float64))
    n = len(x)
    cdf = ndtr((x - mu) / sigma)
    above = np.arange(1, n + 1) / n - cdf
    below = cdf - np.arange(n) / n
    return float(max(above.max(), below.max()))


def fit_normal(scores) -> NormalFit:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(s) < 2:
        raise InsufficientData("need at least two scores to fit a normal")
    mu = float(s.mean())
    sigma = float(np.sqrt(np.mean((s - mu) ** 2)))
    if sigma == 0.0 or not math.isfinite(sigma):
        # A point mass: the fitted "normal" is the data itself.
        return NormalFit(mu, 0.0, len(s), 0.0, degenerate=True)
    return NormalFit(mu, sigma, len(s), ks_statistic(s, mu, sigma))


def stratify(
    scored: ScoredManifest, lo: float = 0.3, hi: float = 0.7
) -> tuple[ScoredManifest, ScoredManifest, ScoredManifest]:
    """Split into (score < lo, score > hi, the rest)."""
    if not lo < hi:
        raise BadThresholds(f"need lo < hi, got lo={lo}, hi={hi}")
    low, high, mid = (ScoredManifest(scored.scorer) for _ in range(3))
    for e in scored:
        if e.score < lo:
            low.entries.append(e)
        elif e.score > hi:
            high.entries.append(e)
        else:
            mid.entries.append(e)
    return low, high, mid


def histogram_csv(counts: np.ndarray, edges: np.ndarray) -> str:
    lines = ["bin_left,bin_right,count"]
    lines += [f"{edges[i]:.6g},{edges[i + 1]:.6g},{int(c)}" for i, c in enumerate(counts)]
    return "\n".join(lines) + "\n"
