"""Value-level vocabulary: landmarks, quantity spaces, qualitative values and states.

A quantity space with ``n`` landmarks has ``2n - 1`` *regions*: even region
indices are the landmarks themselves, odd indices are the open intervals
between neighbouring landmarks.  Magnitudes are stored as region indices,
which makes adjacency and ordering plain integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple, Sequence


class ModelError(ValueError):
    """Raised for malformed models or references to unknown model entities."""


class Sign(IntEnum):
    NEG = -1
    ZERO = 0
    POS = 1
    ANY = 2  # check-time only, never stored in a state

    @property
    def symbol(self) -> str:
        return {-1: "-", 0: "0", 1: "+", 2: "?"}[int(self)]


class QDir(IntEnum):
    DEC = -1
    STD = 0
    INC = 1

    @property
    def sign(self) -> Sign:
        return Sign(int(self))

    @property
    def word(self) -> str:
        return ("dec", "std", "inc")[int(self) + 1]

    @property
    def glyph(self) -> str:
        return ("v", "o", "^")[int(self) + 1]

    @property
    def arrow(self) -> str:
        return ("↓", "∘", "↑")[int(self) + 1]

    @classmethod
    def parse(cls, word: str) -> "QDir":
        try:
            return {"dec": cls.DEC, "std": cls.STD, "inc": cls.INC}[word]
        except KeyError:
            raise ModelError(f"unknown direction {word!r} (expected dec, std or inc)") from None


class TimeLabel(Enum):
    POINT = "P"
    INTERVAL = "I"

    def flipped(self) -> "TimeLabel":
        return TimeLabel.INTERVAL if self is TimeLabel.POINT else TimeLabel.POINT


def sign_of(value: float) -> Sign:
    return Sign.POS if value > 0 else Sign.NEG if value < 0 else Sign.ZERO


def sign_add(a: Sign, b: Sign) -> Sign:
    """Qualitative sum of two signs; ``pos + neg`` is unconstrained."""
    if a is Sign.ANY or b is Sign.ANY:
        return Sign.ANY
    if a == Sign.ZERO:
        return b
    if b == Sign.ZERO or a == b:
        return a
    return Sign.ANY


def sign_mul(a: Sign, b: Sign) -> Sign:
    if a is Sign.ANY or b is Sign.ANY:
        return Sign.ANY
    return Sign(int(a) * int(b))


def compatible(required: Sign, actual: Sign) -> bool:
    return required is Sign.ANY or required == actual


def aggregate(signs: Sequence[Sign]) -> Sign:
    """Combine signed influences: all zero -> zero, one strict sign -> that sign, mixed -> any."""
    seen = set(signs)
    if Sign.ANY in seen or (Sign.NEG in seen and Sign.POS in seen):
        return Sign.ANY
    if Sign.POS in seen:
        return Sign.POS
    if Sign.NEG in seen:
        return Sign.NEG
    return Sign.ZERO


class QMag(NamedTuple):
    """Qualitative magnitude, stored as a region index of its quantity space."""

    region: int

    @classmethod
    def at(cls, landmark: int) -> "QMag":
        return cls(2 * landmark)

    @classmethod
    def between(cls, lower: int) -> "QMag":
        return cls(2 * lower + 1)

    @property
    def is_landmark(self) -> bool:
        return self.region % 2 == 0

    @property
    def landmark(self) -> int:
        if not self.is_landmark:
            raise ValueError("magnitude is an interval")
        return self.region // 2

    @property
    def bounds(self) -> tuple[int, int]:
        """Landmark indices enclosing the magnitude (equal for a landmark)."""
        return (self.region // 2, (self.region + 1) // 2)


class QualitativeValue(NamedTuple):
    mag: QMag
    dir: QDir


@dataclass(frozen=True)
class QuantitySpace:
    landmarks: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.landmarks) < 2:
            raise ModelError("a quantity space needs at least two landmarks")
        if len(set(self.landmarks)) != len(self.landmarks):
            raise ModelError(f"duplicate landmark in quantity space {self.landmarks}")

    @property
    def n_regions(self) -> int:
        return 2 * len(self.landmarks) - 1

    @property
    def top(self) -> int:
        return self.n_regions - 1

    def index(self, name: str) -> int:
        try:
            return self.landmarks.index(name)
        except ValueError:
            raise ModelError(f"unknown landmark {name!r} in space {self.landmarks}") from None

    def __contains__(self, name: object) -> bool:
        return name in self.landmarks

    def is_bound(self, mag: QMag) -> bool:
        return mag.region == 0 or mag.region == self.top

    def valid(self, mag: QMag) -> bool:
        return 0 <= mag.region <= self.top

    def magnitudes(self) -> list[QMag]:
        return [QMag(r) for r in range(self.n_regions)]

    def values(self) -> list[QualitativeValue]:
        return [QualitativeValue(m, d) for m in self.magnitudes() for d in QDir]

    def mag_name(self, mag: QMag) -> str:
        if mag.is_landmark:
            return self.landmarks[mag.landmark]
        lo, hi = mag.bounds
        return f"({self.landmarks[lo]},{self.landmarks[hi]})"

    def parse_mag(self, text: str) -> QMag:
        """Inverse of :meth:`mag_name`."""
        if text.startswith("(") and text.endswith(")"):
            lo, sep, hi = text[1:-1].partition(",")
            i, j = self.index(lo.strip()), self.index(hi.strip())
            if not sep or j != i + 1:
                raise ModelError(f"interval {text} does not join adjacent landmarks")
            return QMag.between(i)
        return QMag.at(self.index(text))

    def format(self, v: QualitativeValue) -> str:
        return f"<{self.mag_name(v.mag)}, {v.dir.word}>"


def sign_relative(v: QualitativeValue | QMag, landmark: str | int, space: QuantitySpace) -> Sign:
    """Position of a magnitude relative to a landmark of the same space."""
    mag = v.mag if isinstance(v, QualitativeValue) else v
    idx = space.index(landmark) if isinstance(landmark, str) else landmark
    if not 0 <= idx < len(space.landmarks):
        raise ModelError(f"landmark index {idx} outside space {space.landmarks}")
    if not space.valid(mag):
        raise ModelError(f"magnitude {mag} invalid in space {space.landmarks}")
    return sign_of(mag.region - 2 * idx)


def adjacent_regions(mag: QMag, space: QuantitySpace) -> tuple[QMag | None, QMag | None]:
    below = QMag(mag.region - 1) if mag.region > 0 else None
    above = QMag(mag.region + 1) if mag.region < space.top else None
    return below, above


@dataclass(frozen=True)
class QualitativeState:
    """Total assignment (in model declaration order) plus its time label."""

    values: tuple[QualitativeValue, ...]
    label: TimeLabel

    def __lt__(self, other: "QualitativeState") -> bool:  # canonical order
        return sort_key(self) < sort_key(other)

    def with_label(self, label: TimeLabel) -> "QualitativeState":
        return QualitativeState(self.values, label)

    @property
    def all_steady(self) -> bool:
        return all(v.dir == QDir.STD for v in self.values)

    @property
    def is_equilibrium(self) -> bool:
        return self.label is TimeLabel.POINT and self.all_steady


def sort_key(s: QualitativeState) -> tuple:
    return (s.label.value, tuple((v.mag.region, int(v.dir)) for v in s.values))


def state_key(s: QualitativeState) -> bytes:
    """Canonical, injective byte encoding used to deduplicate STG vertices."""
    body = ";".join(f"{v.mag.region},{int(v.dir)}" for v in s.values)
    return f"{s.label.value}|{body}".encode("ascii")
