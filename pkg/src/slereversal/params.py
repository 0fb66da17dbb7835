"""Force-point parameter algebra for chordal SLE_kappa(rho).

Weights, locations and kappa are held as :class:`fractions.Fraction` so the
reversal transform and the threshold comparisons are exact.  Floats are
converted through their ``repr`` (``0.1`` becomes ``1/10``).

Indexing convention: on each side index 0 is the degenerate point next to
the origin (``0-`` on the left, ``0+`` on the right).  ``left_points[i - 1]``
is ``x^{i,L}`` and ``left_weights[i]`` is ``rho^{i,L}``; likewise on the
right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

LEFT = "L"
RIGHT = "R"
SIDES = (LEFT, RIGHT)

Number = int | float | str | Fraction


class ParamsError(ValueError):
    """Malformed force-point configuration (ordering, lengths, kappa)."""


class ThresholdViolation(ValueError):
    """A partial weight sum is at or below the continuation bound."""

    def __init__(self, side: str, index: int, partial_sum: Fraction, bound: Fraction):
        self.side = side
        self.index = index
        self.partial_sum = partial_sum
        self.bound = bound
        super().__init__(
            f"partial sum of rho^{{0..{index},{side}}} = {float(partial_sum):g} "
            f"is not > {float(bound):g}"
        )


def as_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a weight")
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ParamsError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


def _fractions(values: Iterable[Number]) -> tuple[Fraction, ...]:
    return tuple(as_fraction(v) for v in values)


@dataclass(frozen=True)
class SleParams:
    """kappa plus force points and weights on both sides of the origin.

    Construction only normalises types; call :func:`validate_params` (or
    :meth:`check`) to enforce ordering and the continuation-threshold bound.
    """

    kappa: Fraction
    left_points: tuple[Fraction, ...] = ()
    right_points: tuple[Fraction, ...] = ()
    left_weights: tuple[Fraction, ...] = (Fraction(0),)
    right_weights: tuple[Fraction, ...] = (Fraction(0),)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", as_fraction(self.kappa))
        for name in ("left_points", "right_points", "left_weights", "right_weights"):
            object.__setattr__(self, name, _fractions(getattr(self, name)))

    @classmethod
    def build(
        cls,
        kappa: Number,
        rho_left: Sequence[Number] = (0,),
        rho_right: Sequence[Number] = (0,),
        x_left: Sequence[Number] = (),
        x_right: Sequence[Number] = (),
    ) -> "SleParams":
        return cls(kappa, tuple(x_left), tuple(x_right), tuple(rho_left), tuple(rho_right))

    def points(self, side: str) -> tuple[Fraction, ...]:
        return self.left_points if side == LEFT else self.right_points

    def weights(self, side: str) -> tuple[Fraction, ...]:
        return self.left_weights if side == LEFT else self.right_weights

    @property
    def k(self) -> int:
        return len(self.left_points)

    @property
    def ell(self) -> int:
        return len(self.right_points)

    @property
    def threshold(self) -> Fraction:
        return max(Fraction(-2), self.kappa / 2 - 4)

    def partial_sums(self, side: str) -> list[Fraction]:
        out, acc = [], Fraction(0)
        for w in self.weights(side):
            acc += w
            out.append(acc)
        return out

    def nearest_point_distance(self) -> float | None:
        pts = [abs(float(x)) for x in self.left_points[:1] + self.right_points[:1]]
        return min(pts) if pts else None

    def scaled(self, a: Number) -> "SleParams":
        """Force points multiplied by ``a > 0``; weights unchanged."""
        a = as_fraction(a)
        if a <= 0:
            raise ParamsError("dilation factor must be positive")
        return SleParams(
            self.kappa,
            tuple(a * x for x in self.left_points),
            tuple(a * x for x in self.right_points),
            self.left_weights,
            self.right_weights,
        )

    def check(self) -> "SleParams":
        report = validate_params(self)
        report.raise_for_status()
        return self

    def as_config(self) -> dict[str, str]:
        def fmt(vals: Sequence[Fraction]) -> str:
            return ",".join(fmt_fraction(v) for v in vals)

        return {
            "kappa": fmt_fraction(self.kappa),
            "rho_left": fmt(self.left_weights),
            "rho_right": fmt(self.right_weights),
            "x_left": fmt(self.left_points),
            "x_right": fmt(self.right_points),
        }


def fmt_fraction(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    f = float(v)
    if Fraction(repr(f)) == v:
        return repr(f)
    return f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    kind: str = "ok"  # "ok" | "malformed" | "threshold"
    side: str | None = None
    index: int | None = None
    message: str = ""
    partial_sum: Fraction | None = None
    bound: Fraction | None = None

    def raise_for_status(self) -> None:
        if self.kind == "malformed":
            raise ParamsError(self.message)
        if self.kind == "threshold":
            raise ThresholdViolation(self.side, self.index, self.partial_sum, self.bound)


def _malformed(msg: str, side: str | None = None, index: int | None = None) -> ValidityReport:
    return ValidityReport(False, "malformed", side, index, msg)


def validate_params(p: SleParams) -> ValidityReport:
    """Check ordering and Σ_{i<=j} rho^{i,q} > max(-2, kappa/2 - 4) on both sides.

    Structural problems are reported with ``kind="malformed"``; the first
    violating partial sum (left side scanned before right, ``j`` ascending)
    with ``kind="threshold"``.
    """
    if not (0 < p.kappa <= 8):
        return _malformed(f"kappa must lie in (0, 8], got {float(p.kappa):g}")
    for side in SIDES:
        pts, wts = p.points(side), p.weights(side)
        if len(wts) != len(pts) + 1:
            return _malformed(
                f"side {side}: expected {len(pts) + 1} weights for {len(pts)} points, got {len(wts)}",
                side,
            )
        sign = -1 if side == LEFT else 1
        prev = Fraction(0)
        for i, x in enumerate(pts, start=1):
            if sign * x <= sign * prev:
                return _malformed(
                    f"side {side}: x^{{{i},{side}}} = {float(x):g} breaks the strict ordering away from 0",
                    side,
                    i,
                )
            prev = x
    bound = p.threshold
    for side in SIDES:
        for j, s in enumerate(p.partial_sums(side)):
            if not s > bound:
                return ValidityReport(
                    False,
                    "threshold",
                    side,
                    j,
                    f"side {side}: partial sum up to j={j} is {float(s):g}, needs > {float(bound):g}",
                    s,
                    bound,
                )
    return ValidityReport(True)


@dataclass(frozen=True)
class TiltedParams:
    """Base parameters plus one power parameter per non-degenerate point."""

    base: SleParams
    alpha_left: tuple[Fraction, ...] = ()
    alpha_right: tuple[Fraction, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha_left", _fractions(self.alpha_left))
        object.__setattr__(self, "alpha_right", _fractions(self.alpha_right))
        if len(self.alpha_left) != self.base.k or len(self.alpha_right) != self.base.ell:
            raise ParamsError("one alpha per non-degenerate force point is required")

    def alphas(self, side: str) -> tuple[Fraction, ...]:
        return self.alpha_left if side == LEFT else self.alpha_right

    def nonzero_alphas(self) -> list[tuple[str, int, Fraction]]:
        """(side, index i >= 1, alpha) for every alpha != 0."""
        out = []
        for side in SIDES:
            for i, a in enumerate(self.alphas(side), start=1):
                if a != 0:
                    out.append((side, i, a))
        return out

    def is_unweighted(self) -> bool:
        return not self.nonzero_alphas()

    def negated_alphas(self) -> "TiltedParams":
        return TiltedParams(self.base, tuple(-a for a in self.alpha_left), tuple(-a for a in self.alpha_right))

    def scaled(self, a: Number) -> "TiltedParams":
        return TiltedParams(self.base.scaled(a), self.alpha_left, self.alpha_right)


def _j_point(x: Fraction | float) -> Fraction:
    # J(z) = -1/z on a finite nonzero boundary point
    return -1 / as_fraction(x)


def reverse_params(p: SleParams) -> TiltedParams:
    """Parameters of the time reversal of J(eta) for eta ~ SLE_kappa(rho).

    The outermost points ``x^{k+1,L} = -inf`` and ``x^{l+1,R} = +inf`` carry
    minus the total weight of their side; J sends them to ``0+``/``0-`` which
    become the new degenerate points.  Power parameters are
    ``rho_hat (kappa - 4) / (2 kappa)``.
    """
    validate_params(p).raise_for_status()
    ext = {}
    for side in SIDES:
        w = list(p.weights(side))
        ext[side] = (list(p.points(side)) + [None], w + [-sum(w, Fraction(0))])

    def mirrored(src: str) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        pts, wts = ext[src]
        n = len(wts) - 1  # index of the appended infinite point
        new_w = tuple(-wts[n - i] for i in range(n))
        # i = 0 comes from the point at infinity (J(inf) is the degenerate 0^-/+)
        new_x = tuple(_j_point(pts[n - i - 1]) for i in range(1, n))
        return new_x, new_w

    x_hat_left, rho_hat_left = mirrored(RIGHT)
    x_hat_right, rho_hat_right = mirrored(LEFT)
    base = SleParams(p.kappa, x_hat_left, x_hat_right, rho_hat_left, rho_hat_right)
    factor = (p.kappa - 4) / (2 * p.kappa)
    return TiltedParams(
        base,
        tuple(r * factor for r in rho_hat_left[1:]),
        tuple(r * factor for r in rho_hat_right[1:]),
    )


def merge_collided_points(
    p: SleParams,
    left_positions: Sequence[Number] | None = None,
    right_positions: Sequence[Number] | None = None,
) -> SleParams:
    """Rebuild ``p`` after force points have moved, merging coincident ones.

    ``*_positions`` give the new location of every point on that side,
    index 0 (the degenerate point) included; ``None`` keeps the current
    layout.  Points that coincide are merged with summed weights, and
    points sitting at 0 are folded into the degenerate point.  Positions
    must be non-strictly monotone away from 0.
    """
    sides = {}
    for side, positions in ((LEFT, left_positions), (RIGHT, right_positions)):
        wts = p.weights(side)
        if positions is None:
            positions = (Fraction(0),) + p.points(side)
        pos = _fractions(positions)
        if len(pos) != len(wts):
            raise ParamsError(f"side {side}: {len(pos)} positions for {len(wts)} weights")
        sign = -1 if side == LEFT else 1
        prev = Fraction(0)
        for i, x in enumerate(pos):
            if sign * x < sign * prev:
                raise ParamsError(f"side {side}: position {i} is out of order")
            prev = x
        groups: list[list[Fraction]] = [[Fraction(0), Fraction(0)]]
        for x, w in zip(pos, wts):
            if x == groups[-1][0]:
                groups[-1][1] += w
            else:
                groups.append([x, w])
        sides[side] = (tuple(g[0] for g in groups[1:]), tuple(g[1] for g in groups))
    return SleParams(p.kappa, sides[LEFT][0], sides[RIGHT][0], sides[LEFT][1], sides[RIGHT][1])


def params_from_config(cfg: dict[str, str]) -> SleParams:
    """Read kappa, rho_left, rho_right, x_left, x_right (comma separated)."""

    def parse_list(key: str, default: str) -> tuple[Fraction, ...]:
        raw = cfg.get(key, default).strip()
        if not raw:
            return ()
        try:
            return tuple(as_fraction(tok) for tok in raw.split(",") if tok.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ParamsError(f"cannot parse {key}={raw!r}: {exc}") from exc

    if "kappa" not in cfg:
        raise ParamsError("missing key 'kappa'")
    try:
        kappa = as_fraction(cfg["kappa"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ParamsError(f"cannot parse kappa={cfg['kappa']!r}") from exc
    return SleParams.build(
        kappa,
        parse_list("rho_left", "0"),
        parse_list("rho_right", "0"),
        parse_list("x_left", ""),
        parse_list("x_right", ""),
    )
