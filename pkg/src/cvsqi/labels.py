"""Three-class per-cycle quality annotation with its two numeric encodings.

Training uses a soft target (ambiguous cycles count as 0.25 positive);
evaluation collapses ambiguous into the negative class.
"""
from __future__ import annotations

import enum


class QualityLabel(enum.Enum):
    NORMAL = "normal"
    AMBIGUOUS = "ambiguous"
    MOTION = "motion"

    @property
    def train_value(self) -> float:
        return {"normal": 1.0, "ambiguous": 0.25, "motion": 0.0}[self.value]

    @property
    def eval_value(self) -> int:
        return 1 if self is QualityLabel.NORMAL else 0

    @property
    def code(self) -> int:
        """Integer code used in dataset/stream files (1 normal, 2 ambiguous, 0 motion)."""
        return {"normal": 1, "ambiguous": 2, "motion": 0}[self.value]

    @classmethod
    def from_code(cls, code: int) -> "QualityLabel":
        try:
            return {1: cls.NORMAL, 2: cls.AMBIGUOUS, 0: cls.MOTION}[int(code)]
        except KeyError:
            raise ValueError(f"unknown label code {code!r}") from None
