"""Canonical representation of a discovered aggregation-formula structure.

A structure is coefficient-blind: it records only which element-wise
polynomial orders, which interaction orders, and whether the periodic term
are active. Two structures are equal iff their canonical strings are equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class FormulaStructure:
    """Active terms of an aggregation formula, in canonical form."""

    active_poly_orders: tuple[int, ...] = ()
    active_interaction_orders: tuple[int, ...] = ()
    sin_active: bool = False

    def __post_init__(self):
        object.__setattr__(self, "active_poly_orders", tuple(sorted(set(self.active_poly_orders))))
        object.__setattr__(
            self, "active_interaction_orders", tuple(sorted(set(self.active_interaction_orders)))
        )
        if any(k < 1 for k in self.active_poly_orders):
            raise ValueError("polynomial orders start at 1")
        if any(m < 2 for m in self.active_interaction_orders):
            raise ValueError("interaction orders start at 2")

    @property
    def canonical_string(self) -> str:
        """Text rendering, e.g. ``"P2(x) + I2(x)"``; the empty structure is ``"0"``."""
        parts = [f"P{k}(x)" for k in self.active_poly_orders]
        parts += [f"I{m}(x)" for m in self.active_interaction_orders]
        if self.sin_active:
            parts.append("sin(x)")
        return " + ".join(parts) if parts else "0"

    @property
    def is_empty(self) -> bool:
        return not (self.active_poly_orders or self.active_interaction_orders or self.sin_active)

    def contains(self, other: "FormulaStructure") -> bool:
        """True if every active term of ``other`` is active here."""
        return (
            set(other.active_poly_orders) <= set(self.active_poly_orders)
            and set(other.active_interaction_orders) <= set(self.active_interaction_orders)
            and (self.sin_active or not other.sin_active)
        )

    def to_dict(self) -> dict:
        return {
            "poly": list(self.active_poly_orders),
            "interactions": list(self.active_interaction_orders),
            "sin": self.sin_active,
            "canonical": self.canonical_string,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FormulaStructure":
        return cls(
            active_poly_orders=tuple(int(k) for k in d.get("poly", ())),
            active_interaction_orders=tuple(int(m) for m in d.get("interactions", ())),
            sin_active=bool(d.get("sin", False)),
        )


def classify_match(found: FormulaStructure, truth: FormulaStructure) -> str:
    """``exact`` if the structures coincide, ``superset`` if ``found`` strictly
    contains every ground-truth term, ``miss`` if any true term is absent."""
    if found == truth:
        return "exact"
    if found.contains(truth):
        return "superset"
    return "miss"
