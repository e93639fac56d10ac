"""Run reports: per-period selections, strategies and byte counts, serialized as plain text.

Layout::

    # ffward run report v1
    key = value                 (header, one per line)
    [periods]                   (CSV: one row per period x agent)
    [comm]                      (CSV: per-kind size histogram)

Floats are written with ``repr`` so a report reproduces byte-for-byte.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netsim import CommReport

REPORT_MAGIC = "# ffward run report v1"
PERIOD_COLUMNS = ["period", "agent", "strategy", "processed", "delivered", "bytes_sent", "score", "indices"]


class ReportFormatError(ValueError):
    pass


@dataclass
class PeriodRecord:
    period: int
    strategies: list[str]
    selected: list[list[int]]
    delivered: list[bool]
    bytes_sent: list[int]
    scores: list[float] | None = None

    @property
    def processed(self) -> list[int]:
        return [len(s) for s in self.selected]


@dataclass
class RunReport:
    method: str
    num_views: int
    length: int
    period: int
    periods: list[PeriodRecord] = field(default_factory=list)
    comm: CommReport = field(default_factory=CommReport)
    meta: dict = field(default_factory=dict)

    def processed_total(self) -> int:
        return sum(sum(p.processed) for p in self.periods)

    def processing_rate(self) -> float:
        return self.processed_total() / (self.num_views * self.length)

    def selections(self, delivered_only: bool = False) -> list[np.ndarray]:
        """Per-agent processed indices over the whole run."""
        out = [[] for _ in range(self.num_views)]
        for p in self.periods:
            for a, sel in enumerate(p.selected):
                if delivered_only and not p.delivered[a]:
                    continue
                out[a].extend(sel)
        return [np.asarray(s, dtype=np.int64) for s in out]

    def summary_indices(self) -> np.ndarray:
        """Time tags of every selected frame that reached the summary store."""
        sels = self.selections(delivered_only=True)
        if not sels:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(sels))

    def strategy_counts(self) -> list[Counter]:
        return [Counter(p.strategies) for p in self.periods]

    # ------------------------------------------------------------------ text io

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(REPORT_MAGIC + "\n")
        header = {
            "method": self.method,
            "num_views": self.num_views,
            "length": self.length,
            "period": self.period,
            "processed_total": self.processed_total(),
            "bytes_p2p": self.comm.bytes_p2p,
            "bytes_central": self.comm.bytes_central,
            "bytes_delivered": self.comm.bytes_delivered,
            "sends": self.comm.sends,
            "delivered_sends": self.comm.delivered,
        }
        for k in sorted(self.meta):
            header[f"meta.{k}"] = self.meta[k]
        for k, v in header.items():
            out.write(f"{k} = {_fmt(v)}\n")

        out.write("[periods]\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(PERIOD_COLUMNS)
        for p in self.periods:
            for a in range(self.num_views):
                score = "" if p.scores is None else repr(float(p.scores[a]))
                w.writerow([p.period, a, p.strategies[a], len(p.selected[a]), int(p.delivered[a]),
                            p.bytes_sent[a], score, " ".join(map(str, p.selected[a]))])

        out.write("[comm]\n")
        w.writerow(["kind", "size", "count"])
        for kind in sorted(self.comm.histogram):
            for size, count in sorted(self.comm.histogram[kind].items()):
                w.writerow([kind, size, count])
        return out.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "RunReport":
        lines = text.splitlines()
        if not lines or lines[0] != REPORT_MAGIC:
            raise ReportFormatError("missing run report header line")
        sections: dict[str, list[str]] = {"": []}
        current = ""
        for line in lines[1:]:
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                sections[current] = []
            else:
                sections[current].append(line)

        header = {}
        for line in sections[""]:
            if not line.strip():
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ReportFormatError(f"bad header line {line!r}")
            header[key] = value
        try:
            n = int(header["num_views"])
            rep = cls(header["method"], n, int(header["length"]), int(header["period"]))
        except KeyError as exc:
            raise ReportFormatError(f"header lacks {exc.args[0]}") from None
        rep.meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}

        rows = list(csv.DictReader(sections.get("periods", [])))
        by_period: dict[int, list[dict]] = {}
        for row in rows:
            by_period.setdefault(int(row["period"]), []).append(row)
        for period in sorted(by_period):
            group = sorted(by_period[period], key=lambda r: int(r["agent"]))
            if [int(r["agent"]) for r in group] != list(range(n)):
                raise ReportFormatError(f"period {period} must have one row for each agent 0..{n - 1}")
            scores = None if group[0]["score"] == "" else [float(r["score"]) for r in group]
            rep.periods.append(PeriodRecord(
                period=period,
                strategies=[r["strategy"] for r in group],
                selected=[[int(x) for x in r["indices"].split()] for r in group],
                delivered=[r["delivered"] == "1" for r in group],
                bytes_sent=[int(r["bytes_sent"]) for r in group],
                scores=scores,
            ))

        hist: dict[str, Counter] = {}
        for row in csv.DictReader(sections.get("comm", [])):
            hist.setdefault(row["kind"], Counter())[int(row["size"])] = int(row["count"])
        rep.comm = CommReport(
            bytes_p2p=int(header.get("bytes_p2p", 0)),
            bytes_central=int(header.get("bytes_central", 0)),
            bytes_delivered=int(header.get("bytes_delivered", 0)),
            sends=int(header.get("sends", 0)),
            delivered=int(header.get("delivered_sends", 0)),
            histogram=hist,
        )
        if "processed_total" in header and int(header["processed_total"]) != rep.processed_total():
            raise ReportFormatError("processed_total disagrees with the period rows")
        return rep

    @classmethod
    def read(cls, path) -> "RunReport":
        return cls.from_text(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
