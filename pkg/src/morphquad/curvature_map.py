"""Servo angle to arm curvature mapping for the tendon-driven arms.

The chain is servo angle ``alpha`` -> tendon length change ``delta`` ->
effective bend radius -> curvature angle ``beta``.  Lengths are in mm and
angles in degrees throughout this module.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq


class DomainError(ValueError):
    """Input outside the domain of a mapping."""


class GeometryError(ValueError):
    """Invalid arm geometry."""


class FitError(ValueError):
    """Calibration fit could not be computed."""


class CalibrationFormatError(ValueError):
    """Malformed calibration CSV."""


@dataclass(frozen=True)
class ArmGeometry:
    L1: float = 17.5  # tendon offset from the neutral axis
    L2: float = 30.0  # base segment to pulley
    r: float = 12.0  # tendon radius at the servo pulley
    K: float = 1.0
    La: float = 109.5  # arc length of the semi-rigid core
    alpha_max: float = 55.0
    beta_physical_limit: float = 28.0
    beta_efficiency_knee: float = 25.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("L1", "L2", "r", "K", "La", "alpha_max",
                     "beta_physical_limit", "beta_efficiency_knee"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise GeometryError(f"{name} must be finite, got {value!r}")
        for name in ("L1", "L2", "r", "K", "La", "alpha_max"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.beta_efficiency_knee <= self.beta_physical_limit:
            raise GeometryError(
                "need 0 < beta_efficiency_knee <= beta_physical_limit, got "
                f"{self.beta_efficiency_knee} and {self.beta_physical_limit}"
            )


@dataclass(frozen=True)
class AlphaBetaSample:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError(f"non-finite sample ({self.alpha}, {self.beta})")


@dataclass(frozen=True)
class CubicCalibration:
    """Cubic in ``alpha - alpha_ref``, valid only on ``alpha_range``."""

    a: float
    b: float
    c: float
    d: float
    alpha_ref: float
    alpha_range: tuple[float, float]
    max_residual: float = 0.0
    rms_residual: float = 0.0

    def __call__(self, alpha: float) -> float:
        return eval_cubic(self, alpha)


class MappedBeta(NamedTuple):
    beta: float
    clamped: bool


def tendon_delta(alpha: float, geom: ArmGeometry) -> float:
    """Tendon length change in mm produced by a servo rotation of ``alpha`` degrees."""
    geom.validate()
    if not (math.isfinite(alpha) and 0.0 <= alpha <= geom.alpha_max):
        raise DomainError(f"alpha={alpha} outside [0, {geom.alpha_max}] deg")
    a = math.radians(alpha)
    pulled = math.hypot(geom.L2 + geom.r * math.sin(a), geom.r * math.cos(a) - geom.L1)
    rest = math.hypot(geom.L2, geom.r - geom.L1)
    return geom.K * (pulled - rest)


def bend_radius(delta: float, geom: ArmGeometry) -> float:
    """Effective bend radius in mm; infinite for an unbent arm."""
    if delta < 0:
        raise DomainError(f"tendon delta must be >= 0, got {delta}")
    if delta == 0:
        return math.inf
    return geom.La * geom.L1 / delta


def beta_from_delta(delta: float, geom: ArmGeometry) -> float:
    """Curvature angle in degrees for a tendon length change ``delta`` (mm)."""
    if not math.isfinite(delta) or delta < 0:
        raise DomainError(f"tendon delta must be finite and >= 0, got {delta}")
    if delta == 0:
        # R -> infinity, straight arm
        return 0.0
    return delta * 360.0 / (2.0 * math.pi * geom.L1)


def _beta_unclamped(alpha: float, geom: ArmGeometry) -> float:
    return beta_from_delta(tendon_delta(alpha, geom), geom)


def alpha_to_beta(alpha: float, geom: ArmGeometry) -> MappedBeta:
    """Map a servo angle to arm curvature, clamped at the physical stop.

    Negative angles drive the antagonistic tendon and give the mirrored
    (negative) curvature.
    """
    if not math.isfinite(alpha) or abs(alpha) > geom.alpha_max:
        raise DomainError(f"alpha={alpha} outside [-{geom.alpha_max}, {geom.alpha_max}] deg")
    beta = math.copysign(_beta_unclamped(abs(alpha), geom), alpha)
    limit = geom.beta_physical_limit
    if abs(beta) > limit:
        return MappedBeta(math.copysign(limit, beta), True)
    return MappedBeta(beta, False)


def reachable_beta(geom: ArmGeometry) -> tuple[float, float]:
    return 0.0, alpha_to_beta(geom.alpha_max, geom).beta


def beta_to_alpha(beta: float, geom: ArmGeometry, xtol: float = 1e-12) -> float:
    """Servo angle that produces curvature ``beta`` (signed, degrees)."""
    lo, hi = reachable_beta(geom)
    if not math.isfinite(beta) or abs(beta) > hi:
        raise DomainError(
            f"beta={beta} deg not reachable; reachable range is [{-hi:.3f}, {hi:.3f}] deg "
            f"(physical limit {geom.beta_physical_limit:g} deg)"
        )
    target = abs(beta)
    if target == 0.0:
        return 0.0
    # upper bracket: where the unclamped map first reaches the target
    top = geom.alpha_max
    if _beta_unclamped(top, geom) > geom.beta_physical_limit:
        top = brentq(lambda a: _beta_unclamped(a, geom) - geom.beta_physical_limit,
                     0.0, geom.alpha_max, xtol=xtol)
    if target >= _beta_unclamped(top, geom):
        return math.copysign(top, beta)
    alpha = brentq(lambda a: _beta_unclamped(a, geom) - target, 0.0, top, xtol=xtol)
    return math.copysign(alpha, beta)


def sample_forward_map(geom: ArmGeometry, n: int = 20,
                       alpha_hi: float | None = None) -> list[AlphaBetaSample]:
    """Evenly spaced samples of the geometric map up to the physical stop."""
    if alpha_hi is None:
        alpha_hi = abs(beta_to_alpha(reachable_beta(geom)[1], geom))
    return [AlphaBetaSample(float(a), alpha_to_beta(float(a), geom).beta)
            for a in np.linspace(0.0, alpha_hi, n)]


def fit_cubic(samples: Sequence[AlphaBetaSample], alpha_ref: float | None = None) -> CubicCalibration:
    """Least-squares cubic through ``samples``, centred on ``alpha_ref``.

    ``alpha_ref`` defaults to the midpoint of the sampled alpha range.
    """
    if len(samples) < 4:
        raise FitError(f"need at least 4 samples for a cubic fit, got {len(samples)}")
    alpha = np.array([s.alpha for s in samples], dtype=float)
    beta = np.array([s.beta for s in samples], dtype=float)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise FitError("samples contain non-finite values")
    if len(np.unique(alpha)) < 4:
        raise FitError("need at least 4 distinct alpha values")
    if alpha_ref is None:
        alpha_ref = 0.5 * (alpha.min() + alpha.max())
    x = alpha - alpha_ref
    design = np.vander(x, 4)
    coeffs, _, rank, _ = np.linalg.lstsq(design, beta, rcond=None)
    if rank < 4 or not np.all(np.isfinite(coeffs)):
        raise FitError("rank-deficient design matrix")
    resid = design @ coeffs - beta
    a, b, c, d = (float(v) for v in coeffs)
    return CubicCalibration(
        a, b, c, d,
        alpha_ref=float(alpha_ref),
        alpha_range=(float(alpha.min()), float(alpha.max())),
        max_residual=float(np.abs(resid).max()),
        rms_residual=float(np.sqrt(np.mean(resid ** 2))),
    )


def eval_cubic(calib: CubicCalibration, alpha: float) -> float:
    lo, hi = calib.alpha_range
    if not (lo <= alpha <= hi):
        raise DomainError(f"alpha={alpha} outside calibration range [{lo}, {hi}]")
    x = alpha - calib.alpha_ref
    return ((calib.a * x + calib.b) * x + calib.c) * x + calib.d


# -- CSV interfaces ---------------------------------------------------------

SAMPLE_HEADER = ["alpha_deg", "beta_deg"]
CALIBRATION_HEADER = ["arm_id", "a", "b", "c", "d", "alpha_ref", "alpha_min",
                      "alpha_max", "max_residual_deg"]


def parse_samples(text: str, source: str = "<samples>") -> list[AlphaBetaSample]:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i, row) for i, row in enumerate(rows, start=1) if row]
    if not rows:
        raise CalibrationFormatError(f"{source}: empty file")
    line, header = rows[0]
    if [h.strip() for h in header] != SAMPLE_HEADER:
        raise CalibrationFormatError(
            f"{source}:{line}: expected header {','.join(SAMPLE_HEADER)}, got {','.join(header)}")
    samples = []
    for line, row in rows[1:]:
        if len(row) != 2:
            raise CalibrationFormatError(f"{source}:{line}: expected 2 fields, got {len(row)}")
        try:
            samples.append(AlphaBetaSample(float(row[0]), float(row[1])))
        except (ValueError, DomainError) as exc:
            raise CalibrationFormatError(f"{source}:{line}: {exc}") from None
    return samples


def read_samples(path: str | Path) -> list[AlphaBetaSample]:
    path = Path(path)
    # newline="" keeps CRLF handling to the csv module
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_samples(fh.read(), str(path))


def write_calibrations(calibs: Iterable[tuple[str, CubicCalibration]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CALIBRATION_HEADER)
        for arm_id, cal in calibs:
            writer.writerow([arm_id] + [repr(v) for v in (
                cal.a, cal.b, cal.c, cal.d, cal.alpha_ref, cal.alpha_range[0],
                cal.alpha_range[1], cal.max_residual)])


def read_calibrations(path: str | Path) -> dict[str, CubicCalibration]:
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CALIBRATION_HEADER:
            raise CalibrationFormatError(f"{path}:1: expected header {','.join(CALIBRATION_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a, b, c, d, ref, lo, hi, res = (float(v) for v in row[1:])
            except ValueError as exc:
                raise CalibrationFormatError(f"{path}:{line}: {exc}") from None
            out[row[0]] = CubicCalibration(a, b, c, d, ref, (lo, hi), max_residual=res)
    return out
