"""CSV and JSON readers/writers plus the experiment config."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import MixtureSpec, mixture_from_dict, mixture_to_dict

__all__ = [
    "ExperimentConfig",
    "read_series_csv",
    "write_table_csv",
    "read_table_csv",
    "write_predictions_csv",
    "write_samples_csv",
    "write_matrix_dump",
    "read_matrix_dump",
    "fmt",
]


def fmt(x) -> str:
    return "%.17g" % x


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``t,y`` CSV.  Raises ``ValueError`` on an empty or malformed file."""
    header, data = read_table_csv(path)
    if header[:2] != ["t", "y"]:
        raise ValueError(f"{path}: expected header 't,y', got {','.join(header)!r}")
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    t, y = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError(f"{path}: non-finite values")
    return t, y


def write_table_csv(path, header, columns) -> None:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_table_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: unparseable number ({exc})") from exc
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    return header, data.reshape(-1, len(header))


def write_predictions_csv(path, t, mean, variance) -> None:
    write_table_csv(path, ["t", "mean", "variance"], [t, mean, variance])


def write_samples_csv(path, t, draws) -> None:
    draws = np.atleast_2d(draws)
    header = ["t"] + [f"draw_{i}" for i in range(len(draws))]
    write_table_csv(path, header, [t, *draws])


def write_matrix_dump(fh, name: str, tau: float, M: np.ndarray) -> None:
    """Append one matrix as ``# name, dim, tau`` followed by its rows.

    Complex matrices are written as two real dumps, ``name.re`` and ``name.im``.
    """
    M = np.asarray(M)
    if np.iscomplexobj(M):
        write_matrix_dump(fh, name + ".re", tau, M.real)
        write_matrix_dump(fh, name + ".im", tau, M.imag)
        return
    fh.write(f"# {name}, {M.shape[0]}, {fmt(tau)}\n")
    for row in M:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def read_matrix_dump(path) -> list[tuple[str, float, np.ndarray]]:
    out = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        name, dim, tau = (s.strip() for s in lines[i][1:].split(","))
        n = int(dim)
        rows = [[float(v) for v in lines[i + 1 + k].split(",")] for k in range(n)]
        out.append((name, float(tau), np.array(rows)))
        i += n + 1
    return out


@dataclass
class ExperimentConfig:
    """One JSON document describing an experiment.

    ``query`` is either ``{"times": [...]}`` or ``{"start", "stop", "step"}``;
    ``options`` holds command-specific settings.
    """

    kernel: MixtureSpec | None = None
    obs_noise: float = 0.1
    data: str | None = None
    query: dict | None = None
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.obs_noise > 0:
            raise ValueError("obs_noise must be > 0")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.query is not None:
            q = self.query
            if "times" not in q and not {"start", "stop", "step"} <= set(q):
                raise ValueError("query needs 'times' or 'start', 'stop' and 'step'")

    def query_times(self) -> np.ndarray:
        if self.query is None:
            return np.zeros(0)
        if "times" in self.query:
            return np.asarray(self.query["times"], dtype=float)
        q = self.query
        start, stop, step = float(q["start"]), float(q["stop"]), float(q["step"])
        if step <= 0:
            raise ValueError("query step must be > 0")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(max(n, 0))

    def to_dict(self) -> dict:
        return {
            "kernel": None if self.kernel is None else mixture_to_dict(self.kernel),
            "obs_noise": self.obs_noise,
            "data": self.data,
            "query": self.query,
            "seed": self.seed,
            "options": self.options,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        unknown = set(doc) - {"kernel", "obs_noise", "data", "query", "seed", "options"}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kern = doc.get("kernel")
        return cls(
            kernel=None if kern is None else mixture_from_dict(kern),
            obs_noise=float(doc.get("obs_noise", 0.1)),
            data=doc.get("data"),
            query=doc.get("query"),
            seed=int(doc.get("seed", 0)),
            options=dict(doc.get("options", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())
