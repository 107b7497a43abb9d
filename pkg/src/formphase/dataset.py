"""Segmented time series container and its CSV representation.

CSV layout (UTF-8, LF, header first)::

    segment_id,t,x_0..x_{n-1}[,dx_0..dx_{n-1}][,true_phase]

Metadata (generator config, filter-bank cutoffs, ...) lives in a sidecar
JSON file next to the CSV, ``<stem>.meta.json``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingLabels


def fmt(v: float) -> str:
    """Round-trip decimal form with 17 significant digits."""
    return "%.17g" % v


@dataclass
class Segment:
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray | None = None
    phase: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.shape[0] != self.t.shape[0]:
            if self.x.shape[1] == self.t.shape[0]:
                self.x = self.x.T
            else:
                raise ConfigError("states and timestamps differ in length")
        if self.dx is not None:
            self.dx = np.asarray(self.dx, dtype=float).reshape(self.x.shape)
        if self.phase is not None:
            self.phase = np.asarray(self.phase, dtype=float).reshape(len(self.t))

    def __len__(self):
        return len(self.t)

    def slice(self, sl) -> Segment:
        return Segment(
            self.t[sl], self.x[sl],
            None if self.dx is None else self.dx[sl],
            None if self.phase is None else self.phase[sl],
        )


@dataclass
class TimeSeriesDataset:
    segments: list[Segment]
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, x, dx=None, t=None, phase=None, meta=None):
        """Single-segment dataset; ``t`` defaults to sample indices."""
        x = np.atleast_2d(np.asarray(x, float))
        if t is None:
            t = np.arange(len(x), dtype=float)
        return cls([Segment(t, x, dx, phase)], dict(meta or {}))

    @property
    def dim(self) -> int:
        return self.segments[0].x.shape[1]

    def __len__(self):
        return sum(len(s) for s in self.segments)

    @property
    def has_velocities(self) -> bool:
        return all(s.dx is not None for s in self.segments)

    @property
    def has_phase(self) -> bool:
        return all(s.phase is not None for s in self.segments)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([s.x for s in self.segments])

    @property
    def dx(self) -> np.ndarray:
        if not self.has_velocities:
            raise MissingLabels("dataset carries no velocities")
        return np.concatenate([s.dx for s in self.segments])

    @property
    def t(self) -> np.ndarray:
        return np.concatenate([s.t for s in self.segments])

    @property
    def phase(self) -> np.ndarray:
        if not self.has_phase:
            raise MissingLabels("dataset carries no ground-truth phase")
        return np.concatenate([s.phase for s in self.segments])

    @property
    def segment_ids(self) -> np.ndarray:
        return np.concatenate(
            [np.full(len(s), k) for k, s in enumerate(self.segments)])

    def map_states(self, fn) -> TimeSeriesDataset:
        """New dataset with ``fn`` applied to every segment's state array."""
        segs = [Segment(s.t, fn(s.x), s.dx, s.phase) for s in self.segments]
        return TimeSeriesDataset(segs, dict(self.meta))

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path, include_velocities=True, include_phase=True):
        path = Path(path)
        n = self.dim
        with_dx = include_velocities and self.has_velocities
        with_ph = include_phase and self.has_phase
        header = ["segment_id", "t"] + [f"x_{k}" for k in range(n)]
        if with_dx:
            header += [f"dx_{k}" for k in range(n)]
        if with_ph:
            header.append("true_phase")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for sid, s in enumerate(self.segments):
                for i in range(len(s)):
                    row = [str(sid), fmt(s.t[i])] + [fmt(v) for v in s.x[i]]
                    if with_dx:
                        row += [fmt(v) for v in s.dx[i]]
                    if with_ph:
                        row.append(fmt(s.phase[i]))
                    fh.write(",".join(row) + "\n")
        if self.meta:
            meta_path(path).write_text(
                json.dumps(self.meta, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> TimeSeriesDataset:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such dataset: {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if header[:2] != ["segment_id", "t"]:
            raise ConfigError(f"{path}: header must start with segment_id,t")
        xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
        dcols = [i for i, h in enumerate(header) if h.startswith("dx_")]
        pcol = header.index("true_phase") if "true_phase" in header else None
        if dcols and len(dcols) != len(xcols):
            raise ConfigError(f"{path}: dx_* columns do not match x_* columns")
        data = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(
            len(rows), len(header) - 1)
        sids = np.array([int(r[0]) for r in rows], dtype=int)
        segs = []
        for sid in dict.fromkeys(sids.tolist()):
            d = data[sids == sid]
            segs.append(Segment(
                d[:, 0],
                d[:, [c - 1 for c in xcols]],
                d[:, [c - 1 for c in dcols]] if dcols else None,
                d[:, pcol - 1] if pcol is not None else None,
            ))
        meta = {}
        mp = meta_path(path)
        if mp.exists():
            meta = json.loads(mp.read_text(encoding="utf-8"))
        return cls(segs, meta)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")
