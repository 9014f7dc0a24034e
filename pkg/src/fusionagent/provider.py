"""Live prior provider: a remote chat model plays the gambling task and reports policies.

The endpoint speaks the common chat-completions JSON shape: the request carries
``model``, ``messages`` (system + user), ``temperature`` and ``top_p``; the
reply text is read from ``choices[0].message.content`` (or a top-level
``content`` field). The API key, if any, comes from an environment variable.
"""
from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import httpx
import numpy as np

from .core import DECKS
from .priors import (
    PolicyTranscript,
    ReplyParseError,
    TrialPolicy,
    parse_policy_reply,
    save_transcript,
    uniform_policy,
    warn_fallback,
)
from .tasks import IgtEnvironment

log = logging.getLogger(__name__)

PLACEHOLDERS = ("trial_index", "n_trials", "history_summary")
FORMAT_REMINDER = (
    "Your previous reply could not be read. Answer only with a probability "
    "distribution of the form {A: p_A, B: p_B, C: p_C, D: p_D} summing to 1.0."
)


class ProviderError(RuntimeError):
    pass


@dataclass
class ProviderConfig:
    endpoint: str
    model: str = "gpt-4o"
    temperature: float = 0.5
    top_p: float = 0.9
    api_key_env: str = "FUSIONAGENT_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5


def load_prompt(name_or_path) -> str:
    path = Path(name_or_path)
    if path.suffix == ".txt" and path.exists():
        return path.read_text(encoding="utf-8")
    ref = resources.files("fusionagent") / "prompts" / f"{name_or_path}.txt"
    return ref.read_text(encoding="utf-8")


def render_prompt(template: str, **values) -> tuple[str, str]:
    """Fill placeholders and split into (system, user) messages."""
    missing = [k for k in PLACEHOLDERS if f"{{{k}}}" in template and k not in values]
    unknown = [
        m for m in re.findall(r"\{([A-Za-z_][A-Za-z0-9_]*)\}", template) if m not in PLACEHOLDERS
    ]
    if missing or unknown:
        raise ProviderError(f"unresolved prompt placeholders: {sorted(set(missing + unknown))}")
    text = template
    for key in PLACEHOLDERS:
        if key in values:
            text = text.replace(f"{{{key}}}", str(values[key]))
    m = re.match(r"\s*\[System\]:\s*(.*?)\n\s*\n(.*)", text, re.S)
    if m is None:
        return "", text.strip()
    return m.group(1).strip(), m.group(2).strip()


def history_summary(choices: list[int], nets: list[float]) -> str:
    if not choices:
        return "No cards drawn yet."
    counts = ", ".join(f"{d} {choices.count(i)}" for i, d in enumerate(DECKS))
    return (
        f"Last pick: deck {DECKS[choices[-1]]}, net outcome {nets[-1]:+g}. "
        f"Total so far: {sum(nets):+g}. Picks per deck: {counts}."
    )


class HttpPriorProvider:
    def __init__(self, config: ProviderConfig, client: httpx.Client = None):
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def ask(self, system: str, user: str) -> str:
        cfg = self.config
        payload = {
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        }
        last = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = self.client.post(cfg.endpoint, json=payload, headers=self._headers())
                resp.raise_for_status()
                data = resp.json()
                if "choices" in data:
                    return str(data["choices"][0]["message"]["content"])
                return str(data["content"])
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
                last = e
                if attempt < cfg.max_retries:
                    delay = cfg.backoff * 2**attempt
                    log.warning("prior request failed (%s); retrying in %.2fs", e, delay)
                    time.sleep(delay)
        raise ProviderError(f"endpoint {cfg.endpoint} failed after {cfg.max_retries + 1} attempts: {last}")

    def run(self, template: str, persona_id: str, n_trials: int = 100, seed: int = 0, cache_path=None) -> PolicyTranscript:
        """Play ``n_trials`` trials with the remote model choosing, recording its policies."""
        rng = np.random.default_rng(seed)
        env = IgtEnvironment(seed=np.random.SeedSequence(seed).spawn(1)[0])
        choices, nets, trials, fallbacks = [], [], [], []
        for t in range(1, n_trials + 1):
            system, user = render_prompt(
                template, trial_index=t, n_trials=n_trials, history_summary=history_summary(choices, nets)
            )
            raw = self.ask(system, user)
            try:
                probs = parse_policy_reply(raw)
            except ReplyParseError:
                raw = self.ask(system, user + "\n\n" + FORMAT_REMINDER)
                try:
                    probs = parse_policy_reply(raw)
                except ReplyParseError as e:
                    warn_fallback(t, str(e))
                    fallbacks.append(t)
                    probs = uniform_policy()
            trials.append(TrialPolicy(probs, raw))
            action = int(rng.choice(4, p=probs))
            record = env.step(action)
            choices.append(action)
            nets.append(record.net)
        metadata = {
            "provider": "http",
            "model": self.config.model,
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "seed": seed,
            "fallback_trials": fallbacks,
        }
        transcript = PolicyTranscript(persona_id, trials, metadata)
        if cache_path is not None:
            save_transcript(transcript, cache_path)
        return transcript
