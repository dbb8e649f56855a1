"""Loss predictors used while bidding.

A predictor maps a trade ``a`` to the loss a user expects, starting from the
loss it would see with no trade (``base``). The simulation passes the signed
overflow ``c - e`` as ``base``: positive values are data that will not fit,
negative values are buffer room left over.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LossPredictor:
    """``pl(a) = base - gain * f * a``, optionally floored.

    ``gain`` is 1 for the one-step heuristic and ``1/(1-gamma)`` for the
    discounted multi-step variant. With ``floor=None`` the prediction is the
    signed overflow; ``floor=0.0`` gives the clamped reading where a user with
    no predicted loss gains nothing from buying.
    """

    gain: float = 1.0
    floor: float | None = None

    def predict(self, base: float, efficiency: float, trade: float) -> float:
        value = base - self.gain * efficiency * trade
        if self.floor is not None and value < self.floor:
            return self.floor
        return value

    def rate(self, base: float, efficiency: float, trade: float) -> float:
        """Magnitude of d(pl)/da on the buying side of ``trade``; 0 where pinned."""
        if self.floor is not None and self.predict(base, efficiency, trade) <= self.floor:
            # right-derivative: buying more keeps the prediction on the floor
            return 0.0
        return self.gain

    @property
    def is_linear(self) -> bool:
        return self.floor is None


def one_step() -> LossPredictor:
    return LossPredictor(gain=1.0)


def discounted(gamma: float) -> LossPredictor:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    return LossPredictor(gain=1.0 / (1.0 - gamma))
