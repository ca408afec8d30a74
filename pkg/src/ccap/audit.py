"""Data-access audit trail.

Stages that fit statistics or resample data register the row ids they
consumed; tests then prove hygiene properties (the test split never feeds
fit state, SMOTE stays inside fold-training portions) instead of trusting
the orchestration code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AuditEvent:
    stage: str
    rows: np.ndarray
    context: str = ""


@dataclass
class AccessAudit:
    events: list[AuditEvent] = field(default_factory=list)

    def record(self, stage: str, rows, context: str = "") -> None:
        self.events.append(
            AuditEvent(stage=stage, rows=np.asarray(rows, dtype=np.int64), context=context)
        )

    def rows_for(self, stage: str, context: str | None = None) -> set[int]:
        out: set[int] = set()
        for e in self.events:
            if e.stage == stage and (context is None or e.context == context):
                out.update(int(r) for r in e.rows)
        return out

    def stages(self) -> list[str]:
        return sorted({e.stage for e in self.events})
