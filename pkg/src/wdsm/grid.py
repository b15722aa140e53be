"""Density label conversions: percent density, 12-class grid, 4-class scale.

The 12-class grid is twelve equal-width bins over [0, 1], left-closed and
right-open except the last bin which includes 1.  Three consecutive bins
nest into each of the four coarse classes (thresholds 0.25, 0.50, 0.75), so
both scales share their bin edges and the conversions commute.
"""

from dataclasses import dataclass

from .errors import DomainError

N_CLASSES_12 = 12
N_CLASSES_4 = 4
CLASS4_LETTERS = "abcd"


def _check_pd(pd: float) -> float:
    pd = float(pd)
    if not 0.0 <= pd <= 1.0:
        raise DomainError(f"percent density must be in [0, 1], got {pd}")
    return pd


def _check_class12(c: int) -> int:
    c = int(c)
    if not 0 <= c < N_CLASSES_12:
        raise DomainError(f"12-class label must be in 0..11, got {c}")
    return c


def pd_to_class12(pd: float) -> int:
    """floor(pd * 12), with pd = 1 clamped into the last bin."""
    pd = _check_pd(pd)
    return min(int(pd * N_CLASSES_12), N_CLASSES_12 - 1)


def class12_to_pd(c: int) -> float:
    """Midpoint of bin c: (c + 0.5) / 12."""
    c = _check_class12(c)
    return (c + 0.5) / N_CLASSES_12


def pd_to_class4(pd: float) -> int:
    """Quartile class with left-closed bins at 0.25 / 0.50 / 0.75."""
    pd = _check_pd(pd)
    return min(int(pd * N_CLASSES_4), N_CLASSES_4 - 1)


def class12_to_class4(c: int) -> int:
    return _check_class12(c) // 3


@dataclass(frozen=True)
class DensityLabel:
    """Consistent (pd, class12, class4) triple built from a percent density."""

    pd: float
    class12: int
    class4: int

    @classmethod
    def from_pd(cls, pd: float) -> "DensityLabel":
        c12 = pd_to_class12(pd)
        return cls(pd=float(pd), class12=c12, class4=class12_to_class4(c12))

    @property
    def letter(self) -> str:
        return CLASS4_LETTERS[self.class4]
