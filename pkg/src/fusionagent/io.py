"""Dataset ingestion, run configuration and result files.

Gambling-task CSV, long layout (one row per trial)::

    subject_id,trial,choice,gain,loss
    s01,1,A,100,0

``choice`` is a deck letter A-D or a number 1-4. ``loss`` should be <= 0;
positive losses are negated with a warning. The wide layout has one row per
subject with columns ``subject_id, choice_1..choice_T, gain_1..gain_T,
loss_1..loss_T``.

Result files are CSV preceded by one ``#`` line holding a JSON metadata header
(format, version, tool version, config hash, seed). Nothing time-dependent is
written, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import re
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from . import __version__
from .core import DECKS, TrialRecord
from .inference import SubjectData

LONG_COLUMNS = ("subject_id", "trial", "choice", "gain", "loss")
OUTPUT_VERSION = 1
CONFIG_VERSION = 1
EXPERIMENTS = ("simulate", "fit", "recover", "consistency", "ablate", "sweep-omega", "fusion-compare",
               "network", "dd", "prior")


class DataFormatError(ValueError):
    pass


# ---------------------------------------------------------------- CSV ingestion


def _choice(value: str, row: int) -> int:
    v = value.strip().upper()
    if v in DECKS:
        return DECKS.index(v)
    try:
        n = float(v)
    except ValueError:
        raise DataFormatError(f"row {row}: choice {value!r} is not a deck code") from None
    if n != int(n) or not 1 <= n <= 4:
        raise DataFormatError(f"row {row}: choice out of range")
    return int(n) - 1


def _number(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataFormatError(f"row {row}: {column} {value!r} is not a number") from None


def wide_to_long(header: list[str], rows: list[tuple[int, list[str]]]) -> list[tuple[int, dict]]:
    """Reshape per-subject rows into (source row number, long record) pairs."""
    if "subject_id" not in header:
        raise DataFormatError("missing column 'subject_id'")
    pattern = re.compile(r"^(choice|gain|loss)_(\d+)$")
    trials = {}
    for col in header:
        m = pattern.match(col)
        if m:
            trials.setdefault(int(m.group(2)), {})[m.group(1)] = col
    if not trials:
        raise DataFormatError("missing column 'choice_1'")
    for t, cols in sorted(trials.items()):
        for part in ("choice", "gain", "loss"):
            if part not in cols:
                raise DataFormatError(f"missing column '{part}_{t}'")
    pos = {c: i for i, c in enumerate(header)}
    out = []
    for line, row in rows:
        sid = row[pos["subject_id"]]
        for t, cols in sorted(trials.items()):
            rec = {"subject_id": sid, "trial": str(t)}
            rec.update({part: row[pos[c]] for part, c in cols.items()})
            if rec["choice"].strip() == "":
                continue  # subject stopped early
            out.append((line, rec))
    return out


def ingest_igt_csv(path) -> list[SubjectData]:
    """Read a gambling-task CSV in long or wide layout.

    Row numbers in errors count the header as row 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = [(i, r) for i, r in enumerate(reader, start=2) if any(c.strip() for c in r)]
    if any(re.match(r"^choice_\d+$", h) for h in header):
        records = wide_to_long(header, rows)
    else:
        for col in LONG_COLUMNS:
            if col not in header:
                raise DataFormatError(f"missing column {col!r}")
        pos = {c: header.index(c) for c in LONG_COLUMNS}
        records = []
        for line, row in rows:
            if len(row) < len(header):
                raise DataFormatError(f"row {line}: expected {len(header)} fields, got {len(row)}")
            records.append((line, {c: row[pos[c]] for c in LONG_COLUMNS}))

    subjects: dict[str, list] = {}
    negated = 0
    for line, rec in records:
        action = _choice(rec["choice"], line)
        trial = _number(rec["trial"], "trial", line)
        gain = _number(rec["gain"], "gain", line)
        loss = _number(rec["loss"], "loss", line)
        if gain < 0:
            raise DataFormatError(f"row {line}: gain must be >= 0")
        if loss > 0:
            loss = -loss
            negated += 1
        subjects.setdefault(rec["subject_id"].strip(), []).append((trial, line, TrialRecord(action, gain, loss)))
    if negated:
        warnings.warn(f"{path}: {negated} positive loss values negated", stacklevel=2)
    out = []
    for sid, items in subjects.items():
        items.sort(key=lambda x: x[0])
        for prev, cur in zip(items, items[1:]):
            if cur[0] == prev[0]:
                raise DataFormatError(f"row {cur[1]}: duplicate trial for subject {sid}")
        out.append(SubjectData(sid, [rec for _, _, rec in items]))
    if not out:
        raise DataFormatError(f"{path}: no data rows")
    return out


def write_igt_csv(subjects: list[SubjectData], path, letters: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for s in subjects:
            for t, rec in enumerate(s.trials, start=1):
                choice = DECKS[rec.action] if letters else rec.action + 1
                w.writerow([s.subject_id, t, choice, _fmt(rec.gain), _fmt(rec.loss)])


# ---------------------------------------------------------------- run configuration


@dataclass
class RunConfig:
    experiment: str = "simulate"
    engine: str = "orl"
    preset: str = "clinical"
    parameters: dict | None = None
    prior: str = "neutral"
    prior_scale: dict = field(default_factory=dict)
    fusion: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    trial_count: int = 100
    cohort_size: int = 1
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        # partial nested sections are completed from the defaults
        for key, default in (("prior_scale", {"method": "max-abs", "factor": 1.0}),
                             ("fusion", {"mechanism": "linear", "omega": 0.25, "params": {}}),
                             ("environment", {"schedule": None, "shuffle": True, "payscale": 100.0})):
            setattr(self, key, {**default, **(getattr(self, key) or {})})
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if self.trial_count < 1 or self.cohort_size < 1:
            raise ValueError("trial_count and cohort_size must be positive")

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {version}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def referenced_paths(cfg: RunConfig) -> list[str]:
    paths = []
    if looks_like_path(cfg.prior):
        paths.append(cfg.prior)
    if cfg.environment.get("schedule"):
        paths.append(cfg.environment["schedule"])
    for key in ("data", "transcript"):
        if cfg.options.get(key):
            paths.append(cfg.options[key])
    return paths


def looks_like_path(value) -> bool:
    return isinstance(value, str) and ("/" in value or value.endswith((".jsonl", ".transcript")))


def load_config(path) -> RunConfig:
    """Load a YAML run config; relative file references resolve against its directory."""
    path = Path(path)
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    cfg = RunConfig.from_dict(data)
    base = path.parent
    missing = [p for p in referenced_paths(cfg) if not (base / p).exists()]
    if missing:
        raise FileNotFoundError(f"{path}: referenced file(s) not found: {', '.join(missing)}")
    return cfg


def resolve(cfg_path, value: str) -> str:
    if cfg_path is None or Path(value).is_absolute():
        return value
    return str(Path(cfg_path).parent / value)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


# ---------------------------------------------------------------- result files


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def output_header(kind: str, config_hash: str, seed, **extra) -> dict:
    return {
        "format": f"fusionagent-{kind}",
        "version": OUTPUT_VERSION,
        "tool": "fusionagent",
        "tool_version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        **extra,
    }


def write_table(path, header: dict, columns: list[str], rows) -> Path:
    """Write a metadata line, a column header and one row per observation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True, default=_fmt) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c) for c in columns]
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path) -> tuple[dict, list[dict]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise DataFormatError(f"{path}: missing metadata header")
        header = json.loads(first[2:])
        rows = list(csv.DictReader(fh))
    return header, rows
