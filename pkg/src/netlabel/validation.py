"""Small input-validation helpers shared by the public entry points."""

from __future__ import annotations

from .network import PartiallyLabeledNetwork


def check_network(network) -> PartiallyLabeledNetwork:
    if not isinstance(network, PartiallyLabeledNetwork):
        raise TypeError(
            f"expected a PartiallyLabeledNetwork, got {type(network).__name__}"
        )
    return network


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )


def parse_fractions(text: str) -> tuple[float, float, float]:
    """Parse a 'train,val,test' fraction triple from CLI text."""
    parts = [p for p in text.split(",") if p]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated fractions, got {text!r}")
    values = tuple(float(p) for p in parts)
    if any(v <= 0 for v in values) or abs(sum(values) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {text!r}")
    return values
