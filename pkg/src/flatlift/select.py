"""Candidate selection: VQA question construction, answer parsing, the
local realism heuristic, and the proxy pick."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conditions import ForegroundMask, foreground_gradient_magnitude, shading_score
from .core import CandidateImage, ProxyImage, RasterImage, SelectionMethod
from .errors import BackendUnavailable, EmptyForeground, NoCandidates, Unparseable

VQA_QUESTION = "Which image do you think is the most realistic and shows the most 3D feeling?"

SHADING_WEIGHT = 1.0
ENTROPY_WEIGHT = 4.0
_GRADIENT_BINS = 32


@dataclass(frozen=True)
class RealismScore:
    shading_term: float
    gradient_entropy: float

    @property
    def total(self) -> float:
        return SHADING_WEIGHT * self.shading_term + ENTROPY_WEIGHT * self.gradient_entropy


def build_vqa_question(n: int) -> str:
    if n < 1:
        raise ValueError("need at least one candidate")
    return f"{VQA_QUESTION} Answer with a single number from 1 to {n}."


def parse_vqa_answer(text: str, n: int) -> int:
    """First decimal integer token in [1, n]; Unparseable otherwise."""
    if n < 1:
        raise ValueError("need at least one candidate")
    for tok in re.findall(r"\d+", text):
        val = int(tok)
        if 1 <= val <= n:
            return val
    raise Unparseable(f"no integer in [1, {n}] found in answer: {text!r}")


def realism_score(img: RasterImage, mask: ForegroundMask) -> RealismScore:
    """Shading variance plus gradient-histogram entropy over the foreground.

    Both terms are zero for perfectly flat fills and grow with 3D cues
    (smooth shading, varied gradient structure).
    """
    fg = mask.bool_array()
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    shading = shading_score(img, fg)
    grad = foreground_gradient_magnitude(img.luminance(), fg)[fg]
    gmax = float(grad.max())
    if gmax <= 0:
        entropy = 0.0
    else:
        hist, _ = np.histogram(grad, bins=_GRADIENT_BINS, range=(0.0, gmax))
        p = hist.astype(np.float64) / hist.sum()
        p = p[p > 0]
        entropy = float(-(p * np.log2(p)).sum())
    return RealismScore(shading, entropy)


def select_proxy(
    candidates: Sequence[CandidateImage],
    vqa_backend,
    mask: ForegroundMask,
    override: Optional[int] = None,
) -> ProxyImage:
    """Pick the proxy: explicit override, else VQA, else realism heuristic.

    ``vqa_backend`` is a callable (question, images) -> answer string, or
    None when no selection backend is configured.
    """
    if not candidates:
        raise NoCandidates("select_proxy needs at least one candidate")
    n = len(candidates)
    if override is not None:
        if not 1 <= override <= n:
            raise ValueError(f"override index {override} out of [1, {n}]")
        return ProxyImage(
            candidates[override - 1].image,
            override,
            SelectionMethod.USER_OVERRIDE,
            f"user override: candidate {override} of {n}",
        )
    if vqa_backend is not None:
        question = build_vqa_question(n)
        try:
            answer = vqa_backend(question, [c.image for c in candidates])
            idx = parse_vqa_answer(answer, n)
            return ProxyImage(
                candidates[idx - 1].image,
                idx,
                SelectionMethod.VQA,
                f"vqa answer: {answer!r}",
            )
        except (BackendUnavailable, Unparseable) as e:
            fallback_reason = f"{type(e).__name__}: {e}"
    else:
        fallback_reason = "no vqa backend configured"
    scores = [realism_score(c.image, mask).total for c in candidates]
    idx = int(np.argmax(scores)) + 1  # argmax returns the first maximum
    return ProxyImage(
        candidates[idx - 1].image,
        idx,
        SelectionMethod.HEURISTIC_FALLBACK,
        f"heuristic fallback ({fallback_reason}); scores={[round(s, 4) for s in scores]}",
    )
