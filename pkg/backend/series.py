"""Time-indexed observable series and their CSV/JSON serialization."""

import io
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from errors import DomainError
from utils import header_lines

SERIES_LABELS = ("a", "F_mu", "K", "G", "F", "H", "a_closed", "ell", "g", "G_sim", "F_pred", "K_pred")


class SeriesRecord(BaseModel):
    """JSON form of an ObservableSeries."""

    label: str
    times: list
    values: list
    realization_count: list
    meta: Dict[str, Any] = {}
    stderr: Optional[list] = None


@dataclass(frozen=True)
class ObservableSeries:
    """
    Values of one observable on a time grid. stderr, when present, is the
    per-time standard error of an ensemble mean.
    """

    times: np.ndarray
    values: np.ndarray
    realization_count: np.ndarray
    label: str
    meta: Dict[str, Any] = field(default_factory=dict)
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        n = np.broadcast_to(np.asarray(self.realization_count, dtype=int), t.shape).copy()
        if self.label not in SERIES_LABELS:
            raise DomainError(f"Unknown series label '{self.label}'")
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError(f"times and values must be 1-D of equal length, got {t.shape} and {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError(f"Series '{self.label}' has non-finite values")
        if self.stderr is not None:
            se = np.asarray(self.stderr, dtype=float)
            if se.shape != t.shape or not np.all(np.isfinite(se)) or np.any(se < 0):
                raise DomainError(f"Series '{self.label}' needs a finite nonnegative stderr per sample")
            object.__setattr__(self, "stderr", se)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "realization_count", n)

    def __len__(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def window(self, t_lo: float, t_hi: float) -> "ObservableSeries":
        mask = (self.times >= t_lo) & (self.times <= t_hi)
        se = self.stderr[mask] if self.stderr is not None else None
        return ObservableSeries(self.times[mask], self.values[mask], self.realization_count[mask],
                                self.label, dict(self.meta), se)

    def scaled(self, factor: float) -> "ObservableSeries":
        se = self.stderr * abs(factor) if self.stderr is not None else None
        return ObservableSeries(self.times, self.values * factor, self.realization_count, self.label,
                                dict(self.meta), se)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.times, "value": self.values, "n_realizations": self.realization_count})
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame

    def to_csv(self, path: Optional[str] = None, meta: Optional[Dict[str, Any]] = None) -> str:
        """CSV with columns t,value,n_realizations[,stderr] preceded by '# key: value' lines."""
        buf = io.StringIO()
        buf.write(header_lines({"label": self.label, **self.meta, **(meta or {})}))
        self.to_frame().to_csv(buf, index=False, float_format="%.12g", lineterminator="\n")
        text = buf.getvalue()
        if path:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        return text

    def to_record(self) -> SeriesRecord:
        return SeriesRecord(label=self.label, times=self.times.tolist(), values=self.values.tolist(),
                            realization_count=self.realization_count.tolist(), meta=dict(self.meta),
                            stderr=self.stderr.tolist() if self.stderr is not None else None)

    def to_json(self) -> str:
        return json.dumps(self.to_record().model_dump(), sort_keys=True)

    @classmethod
    def read_csv(cls, path: str) -> "ObservableSeries":
        label = "a"
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition(":")
                if key.strip() == "label":
                    label = value.strip()
        frame = pd.read_csv(path, comment="#")
        stderr = frame["stderr"].to_numpy() if "stderr" in frame.columns else None
        return cls(frame["t"].to_numpy(), frame["value"].to_numpy(), frame["n_realizations"].to_numpy(), label,
                   stderr=stderr)
