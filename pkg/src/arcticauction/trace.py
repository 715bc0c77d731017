"""Structured per-phase trace of a solver run.

Each outer round (a scaling phase) gets a :class:`PhaseMark` with start and
end snapshots of the spending vector, and each inner-loop step gets a
:class:`TraceRow` recording the potential before and after.  The acceptance
suite replays these records to verify the potential, drift, and abundance
disciplines independently of the in-run assertions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from arcticauction.core import format_rational

Edge = tuple[str, str]


@dataclass
class TraceRow:
    phase: int
    delta: Fraction
    kind: str  # refund | augment_buyer | augment_good | restart_repair
    subject: str
    phi_before: int
    phi_after: int

    def to_doc(self) -> dict:
        return {
            "phase": self.phase,
            "delta": format_rational(self.delta),
            "kind": self.kind,
            "subject": self.subject,
            "phi_before": self.phi_before,
            "phi_after": self.phi_after,
        }


@dataclass
class PhaseMark:
    """One scaling phase: entry transition, scale, and state snapshots."""

    index: int
    delta: Fraction
    entry: str  # init | halve | restart | delayed
    potential_start: int
    spending_start: dict[Edge, Fraction]
    abundant_start: set[Edge]
    prices_start: dict[str, Fraction] = field(default_factory=dict)
    refunds_start: dict[str, Fraction] = field(default_factory=dict)
    spending_end: dict[Edge, Fraction] | None = None
    iterations: int = 0

    def to_doc(self) -> dict:
        return {
            "phase": self.index,
            "delta": format_rational(self.delta),
            "entry": self.entry,
            "phi_start": self.potential_start,
            "iterations": self.iterations,
            "abundant_edges": sorted(self.abundant_start),
        }


@dataclass
class RestartRecord:
    phase: int
    branch: str  # delayed | compressed
    delta_before: Fraction
    delta_after: Fraction
    threshold: Fraction
    surpluses: dict[str, Fraction] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "phase": self.phase,
            "branch": self.branch,
            "delta_before": format_rational(self.delta_before),
            "delta_after": format_rational(self.delta_after),
            "threshold": format_rational(self.threshold),
            "surpluses": {k: format_rational(v) for k, v in sorted(self.surpluses.items())},
        }


@dataclass
class PhaseTrace:
    """Full record of one solver run."""

    algorithm: str
    rows: list[TraceRow] = field(default_factory=list)
    phases: list[PhaseMark] = field(default_factory=list)
    restarts: list[RestartRecord] = field(default_factory=list)
    progress_events: list[tuple[int, str, str]] = field(default_factory=list)
    special_price_iterations: list[int] = field(default_factory=list)
    abundant_discovered: set[Edge] = field(default_factory=set)

    @property
    def augmentations(self) -> int:
        return sum(1 for r in self.rows if r.kind.startswith("augment")) + sum(
            1 for r in self.rows if r.kind == "restart_repair"
        )

    @property
    def refund_steps(self) -> int:
        return sum(1 for r in self.rows if r.kind == "refund")

    @property
    def phase_count(self) -> int:
        return len(self.phases)

    @property
    def restart_count(self) -> int:
        return sum(1 for r in self.restarts if r.branch == "compressed")

    def begin_phase(
        self,
        index: int,
        delta: Fraction,
        entry: str,
        potential: int,
        spending: dict[Edge, Fraction],
        abundant: set[Edge],
        prices: dict[str, Fraction] | None = None,
        refunds: dict[str, Fraction] | None = None,
    ) -> PhaseMark:
        mark = PhaseMark(
            index=index,
            delta=delta,
            entry=entry,
            potential_start=potential,
            spending_start=dict(spending),
            abundant_start=set(abundant),
            prices_start=dict(prices or {}),
            refunds_start=dict(refunds or {}),
        )
        self.phases.append(mark)
        return mark

    def end_phase(self, spending: dict[Edge, Fraction]) -> None:
        self.phases[-1].spending_end = dict(spending)

    def add_row(self, row: TraceRow) -> None:
        self.rows.append(row)
        self.phases[-1].iterations += 1

    def stats_doc(self) -> dict:
        return {
            "phases": self.phase_count,
            "augmentations": self.augmentations,
            "refund_steps": self.refund_steps,
            "restarts": self.restart_count,
            "abundant_edges": len(self.abundant_discovered),
            "progress_events": len(self.progress_events),
        }

    def to_lines(self) -> list[dict]:
        """Row-per-step documents, with phase, restart, and progress markers
        inlined."""
        by_phase: dict[int, list[dict]] = {}
        for row in self.rows:
            by_phase.setdefault(row.phase, []).append(row.to_doc())
        restarts_by_phase = {r.phase: r for r in self.restarts}
        progress_by_phase: dict[int, list[tuple[str, str]]] = {}
        for phase, kind, subject in self.progress_events:
            progress_by_phase.setdefault(phase, []).append((kind, subject))
        lines: list[dict] = []
        for mark in self.phases:
            lines.append({"event": "phase", **mark.to_doc()})
            for kind, subject in progress_by_phase.get(mark.index, []):
                lines.append(
                    {
                        "event": "progress",
                        "phase": mark.index,
                        "kind": kind,
                        "subject": subject,
                    }
                )
            for doc in by_phase.get(mark.index, []):
                lines.append({"event": "step", **doc})
            if mark.index in restarts_by_phase:
                lines.append(
                    {"event": "restart", **restarts_by_phase[mark.index].to_doc()}
                )
        return lines
