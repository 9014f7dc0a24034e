"""Regenerate the bundled synthetic persona transcripts.

These stand in for recorded model replies: each trial's policy is a Dirichlet
draw around a persona-specific centre. Output is deterministic.
"""
from pathlib import Path

import numpy as np

from fusionagent.priors import PolicyTranscript, TrialPolicy, save_transcript

OUT = Path(__file__).resolve().parents[1] / "src" / "fusionagent" / "data"
T = 100


def jittered(rng, centre, concentration, n=T):
    centre = np.asarray(centre, dtype=float)
    return [rng.dirichlet(centre * concentration) for _ in range(n)]


def build(name, policies, seed, note):
    trials = [TrialPolicy(np.round(p / p.sum(), 10)) for p in policies]
    meta = {"provider": "synthetic", "seed": seed, "note": note, "generator": "scripts/make_transcripts.py"}
    return PolicyTranscript(name, trials, meta)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)
    uniform = np.full(4, 0.25)
    sets = {
        "cbt": build("cbt", jittered(rng, [0.1, 0.1, 0.4, 0.4], 200), 2024, "favours C and D"),
        "neutral": build("neutral", [uniform.copy() for _ in range(T)], 2024, "uniform every trial"),
        "noisy": build("noisy", jittered(rng, uniform, 8), 2024, "broad jitter around uniform"),
        "compliant": build("compliant", jittered(rng, uniform, 400), 2024, "near-uniform"),
        "biased": build(
            "biased",
            jittered(rng, [0.7, 0.1, 0.1, 0.1], 100, 80) + [np.array([1.0, 0.0, 0.0, 0.0]) for _ in range(20)],
            2024,
            "favours A; trials 81-100 fully degenerate",
        ),
    }
    for name, tr in sets.items():
        save_transcript(tr, OUT / f"{name}.transcript.jsonl")
        print(name, np.round(tr.matrix().mean(axis=0), 4))


if __name__ == "__main__":
    main()
