"""Static external priors: transcripts of per-trial policies -> mean-zero utility vector.

A transcript is JSON Lines. The first line is a header object
``{"format": "policy-transcript", "version": 1, "persona_id": ..., "n_actions": 4,
"metadata": {...}}``; every following line is one trial
``{"trial": 1, "probs": [pA, pB, pC, pD], "raw": "..."}`` (``raw`` optional).
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import DECKS, PriorVector

TRANSCRIPT_FORMAT = "policy-transcript"
TRANSCRIPT_VERSION = 1
SCALE_METHODS = ("unit-std", "max-abs", "fixed-factor")


class TranscriptError(ValueError):
    pass


class ReplyParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrialPolicy:
    probs: np.ndarray
    raw: str | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"invalid probabilities {p}")
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {p.sum():.6g}, not 1")
        object.__setattr__(self, "probs", p)

    def __eq__(self, other):
        return (
            isinstance(other, TrialPolicy)
            and np.array_equal(self.probs, other.probs)
            and self.raw == other.raw
        )


@dataclass(eq=False)
class PolicyTranscript:
    persona_id: str
    trials: list[TrialPolicy]
    provider_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trials:
            raise TranscriptError("transcript has no trials")

    @property
    def n_actions(self) -> int:
        return len(self.trials[0].probs)

    def matrix(self) -> np.ndarray:
        return np.vstack([t.probs for t in self.trials])

    def __eq__(self, other):
        return (
            isinstance(other, PolicyTranscript)
            and self.persona_id == other.persona_id
            and self.trials == other.trials
            and self.provider_metadata == other.provider_metadata
        )


@dataclass(frozen=True)
class PriorScaleConfig:
    method: str = "max-abs"
    factor: float = 1.0

    def __post_init__(self):
        if self.method not in SCALE_METHODS:
            raise ValueError(f"unknown scale method {self.method!r}; choose from {SCALE_METHODS}")
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")


def aggregate_prior(transcript: PolicyTranscript) -> np.ndarray:
    """Average the per-trial policies into one probability vector."""
    if not transcript.trials:
        raise TranscriptError("transcript has no trials")
    return transcript.matrix().mean(axis=0)


def prior_to_utility(prob, cfg: PriorScaleConfig = PriorScaleConfig()) -> PriorVector:
    p = np.asarray(prob, dtype=float)
    centered = p - p.mean()
    if cfg.method == "fixed-factor":
        values = centered * cfg.factor
    else:
        norm = np.sqrt(np.mean(centered**2)) if cfg.method == "unit-std" else np.max(np.abs(centered))
        # uniform input has no direction to scale
        values = np.zeros_like(centered) if norm < 1e-15 else centered / norm
    # remove rounding residue so the mean-zero invariant holds tightly
    values = values - values.mean()
    return PriorVector(values, method=cfg.method, source="transcript", metadata={"factor": cfg.factor})


# ---------------------------------------------------------------- transcript I/O


def save_transcript(transcript: PolicyTranscript, path) -> None:
    header = {
        "format": TRANSCRIPT_FORMAT,
        "version": TRANSCRIPT_VERSION,
        "persona_id": transcript.persona_id,
        "n_actions": transcript.n_actions,
        "metadata": transcript.provider_metadata,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for i, trial in enumerate(transcript.trials, start=1):
        rec = {"trial": i, "probs": [float(x) for x in trial.probs]}
        if trial.raw is not None:
            rec["raw"] = trial.raw
        lines.append(json.dumps(rec))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def load_transcript(path) -> PolicyTranscript:
    text = Path(path).read_text()
    lines = [(n, line) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise TranscriptError(f"{path}: empty file")
    n0, first = lines[0]
    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise TranscriptError(f"{path}: line {n0}: bad header: {e}") from None
    if header.get("format") != TRANSCRIPT_FORMAT:
        raise TranscriptError(f"{path}: line {n0}: not a policy transcript")
    if header.get("version") != TRANSCRIPT_VERSION:
        raise TranscriptError(f"{path}: line {n0}: unsupported version {header.get('version')}")
    n_actions = int(header.get("n_actions", 4))
    trials = []
    for n, line in lines[1:]:
        try:
            rec = json.loads(line)
            probs = rec["probs"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise TranscriptError(f"{path}: line {n}: malformed record ({e})") from None
        if len(probs) != n_actions:
            raise TranscriptError(f"{path}: line {n}: expected {n_actions} probabilities")
        try:
            trials.append(TrialPolicy(probs, rec.get("raw")))
        except ValueError as e:
            raise TranscriptError(f"{path}: line {n}: {e}") from None
    if not trials:
        raise TranscriptError(f"{path}: transcript has no trials")
    return PolicyTranscript(header.get("persona_id", ""), trials, header.get("metadata", {}))


def bundled_transcript(name: str) -> PolicyTranscript:
    ref = resources.files("fusionagent") / "data" / f"{name}.transcript.jsonl"
    with resources.as_file(ref) as path:
        if not path.exists():
            raise KeyError(name)
        return load_transcript(path)


# ---------------------------------------------------------------- static presets

IGT_PRESETS = ("neutral", "cbt", "noisy")
DD_PRESETS = ("neutral", "cbt", "noisy")


def static_prior(persona, task: str = "igt", scale: PriorScaleConfig = PriorScaleConfig(), seed: int = 0) -> PriorVector:
    """Prior from a named preset or an explicit vector.

    IGT presets: ``neutral`` (zero), ``cbt`` (from the bundled CBT transcript),
    ``noisy`` (a seeded random tilt). Delay-task presets use two actions
    [immediate, delayed]; ``cbt`` favours the delayed option.
    """
    n_actions = 4 if task == "igt" else 2
    if not isinstance(persona, str):
        values = np.asarray(persona, dtype=float)
        if len(values) != n_actions:
            raise ValueError(f"explicit prior needs {n_actions} entries, got {len(values)}")
        return PriorVector(values, method="explicit", source="explicit")
    presets = IGT_PRESETS if task == "igt" else DD_PRESETS
    if persona not in presets:
        raise ValueError(f"unknown prior preset {persona!r}; available: {', '.join(presets)}")
    if persona == "neutral":
        return PriorVector(np.zeros(n_actions), method=scale.method, source="preset:neutral")
    if persona == "noisy":
        rng = np.random.default_rng(seed)
        prob = rng.dirichlet(np.full(n_actions, 20.0))
    elif task == "igt":
        prob = aggregate_prior(bundled_transcript("cbt"))
    else:
        prob = np.array([0.25, 0.75])
    out = prior_to_utility(prob, scale)
    return PriorVector(out.values, method=scale.method, source=f"preset:{persona}", metadata=out.metadata)


# ---------------------------------------------------------------- reply parsing

_NUMBER = r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(%?)"


def parse_policy_reply(text: str, labels=DECKS, tolerance: float = 0.05) -> np.ndarray:
    """Parse ``{A: 0.4, B: 0.1, C: 0.25, D: 0.25}`` or ``A: 0.4`` lines into probabilities.

    Sums within ``1 +/- tolerance`` are renormalised; anything else is rejected.
    """
    values = {}
    for label in labels:
        pattern = rf"(?<![A-Za-z0-9_])[\"']?(?:p_?)?{re.escape(label)}[\"']?\s*[:=]\s*{_NUMBER}"
        m = re.search(pattern, text)
        if m is None:
            raise ReplyParseError(f"no probability for option {label}")
        value = float(m.group(1))
        if m.group(2):
            value /= 100.0
        values[label] = value
    p = np.array([values[label] for label in labels])
    total = p.sum()
    if not (1 - tolerance) <= total <= (1 + tolerance):
        raise ReplyParseError(f"probabilities sum to {total:.4g}")
    return p / total


def uniform_policy(n_actions: int = 4) -> np.ndarray:
    return np.full(n_actions, 1.0 / n_actions)


def warn_fallback(trial: int, reason: str) -> None:
    warnings.warn(f"trial {trial}: unusable reply ({reason}); recorded uniform policy", stacklevel=2)
