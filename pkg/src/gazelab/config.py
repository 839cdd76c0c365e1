"""Run configuration, report schema, and provenance plumbing.

A RunConfig merges the model, training, metric, and corpus settings with
output paths into one JSON document that round-trips losslessly; unknown
keys are rejected so typos fail loudly instead of silently using
defaults. Reports carry a closed metric vocabulary plus a provenance
block (config hash, seeds, version) and are emitted as both CSV and
JSON.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .metrics import MetricConfig
from .model import ModelConfig
from .synthetic import CorpusConfig
from .train import TrainConfig


def coerce_section(cls, data: dict, name: str):
    """Build a config dataclass from a dict, rejecting unknown keys.

    List values are coerced to tuples for fields whose defaults are
    tuples, so JSON round-trips reproduce the original field types.
    """
    if not isinstance(data, dict):
        raise ValueError(f"config section {name!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ValueError(f"unknown keys in config section {name!r}: {unknown}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list) and isinstance(fields[key].default, tuple):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


@dataclass
class PathsConfig:
    """Filesystem locations; checkpoint is optional until training ran."""

    data_dir: str = "data"
    out_dir: str = "out"
    checkpoint: str | None = None


@dataclass
class RunConfig:
    """All settings for one reproducible workflow run."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    _SECTIONS = (("model", ModelConfig), ("train", TrainConfig),
                 ("metric", MetricConfig), ("corpus", CorpusConfig),
                 ("paths", PathsConfig))

    def __post_init__(self):
        # the model consumes corpus tensors; catch mismatches at load time
        pairs = (("n_observers", self.model.n_observers,
                  self.corpus.n_observers),
                 ("height", self.model.height, self.corpus.height),
                 ("width", self.model.width, self.corpus.width),
                 ("channels", self.model.channels, self.corpus.channels))
        for name, m, c in pairs:
            if m != c:
                raise ValueError(
                    f"model/corpus mismatch on {name}: {m} != {c}")
        if self.corpus.scanpath_len > self.model.max_steps:
            raise ValueError(
                f"corpus scanpath_len {self.corpus.scanpath_len} exceeds "
                f"model max_steps {self.model.max_steps}")

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name))
                for name, _ in self._SECTIONS}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValueError("run config must be a JSON object")
        known = {name for name, _ in cls._SECTIONS}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config sections: {unknown}")
        kwargs = {name: coerce_section(section_cls, data.get(name, {}), name)
                  for name, section_cls in cls._SECTIONS}
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def load_run_config(path) -> RunConfig:
    return RunConfig.from_json(Path(path).read_text())


def apply_overrides(data: dict, assignments) -> dict:
    """Apply dotted key=value overrides to a raw config dict in place.

    Values parse as JSON literals, falling back to plain strings, so
    ``model.hidden=32`` and ``paths.out_dir=run1`` both work.
    """
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(
                f"override {item!r} must look like section.key=value")
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r} descends into a value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node[parts[-1]] = value
    return data


def canonical_json(obj) -> str:
    """Deterministic compact encoding used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(
        canonical_json(config.to_dict()).encode()).hexdigest()


def version_string() -> str:
    """Package version, extended with git describe when inside a checkout."""
    here = Path(__file__).resolve().parent
    try:
        probe = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=5)
        if probe.returncode == 0 and probe.stdout.strip():
            return f"v{__version__}+g{probe.stdout.strip()}"
    except OSError:
        pass
    return f"v{__version__}"


METRIC_VOCABULARY = frozenset({
    "sm", "mm", "sed",
    "mrr", "r_at_1", "r_at_5",
    "cc", "auc", "nss", "sauc", "kld", "sim",
    "loss_pos", "loss_dur", "loss_total",
    "accuracy", "rho", "p_value", "t_stat",
})

CSV_COLUMNS = ("variant", "split", "metric", "value", "stderr")


@dataclass
class ReportRow:
    variant: str
    split: str
    metric: str
    value: float
    stderr: float | None = None

    def __post_init__(self):
        if self.metric not in METRIC_VOCABULARY:
            raise ValueError(
                f"metric {self.metric!r} not in the report vocabulary")
        self.value = float(self.value)
        if self.stderr is not None:
            self.stderr = float(self.stderr)


@dataclass
class MetricReport:
    rows: list[ReportRow]
    provenance: dict


def provenance_block(config: RunConfig, seeds: dict) -> dict:
    return {
        "config_hash": config_hash(config),
        "seeds": {name: int(value) for name, value in seeds.items()},
        "version": version_string(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def emit_report(report: MetricReport, out_dir) -> dict:
    """Write report.json and report.csv; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    payload = {
        "rows": [dataclasses.asdict(row) for row in report.rows],
        "provenance": report.provenance,
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([row.variant, row.split, row.metric,
                             repr(row.value),
                             "" if row.stderr is None else repr(row.stderr)])
    return {"json": json_path, "csv": csv_path}


def read_report_csv(path) -> list[ReportRow]:
    """Reparse an emitted CSV into rows (inverse of emit_report)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        rows = []
        for record in reader:
            variant, split, metric, value, stderr = record
            rows.append(ReportRow(variant=variant, split=split, metric=metric,
                                  value=float(value),
                                  stderr=None if stderr == "" else
                                  float(stderr)))
    return rows
