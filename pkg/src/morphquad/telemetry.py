"""Telemetry records, CSV round-trip, metric windows and metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .morphology import ArmStiffness, passive_deflection

TELEMETRY_COLUMNS = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "roll_deg", "pitch_deg", "yaw_deg",
    "beta1", "beta2", "beta3", "beta4", "beta1_cmd", "beta2_cmd", "beta3_cmd", "beta4_cmd",
    "T1", "T2", "T3", "T4", "wx", "wy", "wz", "mode", "sat",
]

# saturation flag bits
SAT_MOTOR_BITS = 0x0F  # bit i: motor i+1 clipped by the mixer
SAT_TILT = 0x10
SAT_FAULT = 0x20


class TelemetryError(ValueError):
    pass


class TelemetrySchemaError(TelemetryError):
    pass


@dataclass
class TelemetryRecord:
    t: float
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    betas: tuple[float, float, float, float]
    beta_commands: tuple[float, float, float, float]
    motor_thrusts: tuple[float, float, float, float]
    wind: tuple[float, float, float]
    mode: str
    sat: int = 0

    def values(self) -> list[float]:
        return [self.t, *self.position, *self.velocity, self.roll_deg, self.pitch_deg, self.yaw_deg,
                *self.betas, *self.beta_commands, *self.motor_thrusts, *self.wind]

    def row(self) -> list[str]:
        return [repr(float(v)) for v in self.values()] + [self.mode, str(int(self.sat))]

    @classmethod
    def from_row(cls, row: list[str]) -> "TelemetryRecord":
        v = [float(x) for x in row[:25]]
        return cls(v[0], tuple(v[1:4]), tuple(v[4:7]), v[7], v[8], v[9], tuple(v[10:14]),
                   tuple(v[14:18]), tuple(v[18:22]), tuple(v[22:25]), row[25], int(row[26]))


@dataclass
class TelemetryLog:
    records: list[TelemetryRecord] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)
    # in-memory traces that are not part of the CSV schema
    extras: dict[str, list] = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def append(self, rec: TelemetryRecord) -> None:
        if self.records and not rec.t > self.records[-1].t:
            raise TelemetryError(f"non-increasing time {rec.t} after {self.records[-1].t}")
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        idx = TELEMETRY_COLUMNS.index(name)
        if idx >= 25:
            raise KeyError(f"{name} is not a numeric column")
        return self.array()[:, idx]

    def array(self) -> np.ndarray:
        """Numeric columns as an (n, 25) array."""
        return np.array([r.values() for r in self.records], dtype=float).reshape(-1, 25)

    def __eq__(self, other):
        if not isinstance(other, TelemetryLog):
            return NotImplemented
        return self.records == other.records and self.meta == other.meta


def write_telemetry(log: TelemetryLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in log.meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TELEMETRY_COLUMNS)
        for rec in log.records:
            writer.writerow(rec.row())


def read_telemetry(path: str | Path) -> TelemetryLog:
    path = Path(path)
    log = TelemetryLog()
    header_seen = False
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\r\n")
            if not header_seen:
                if text.startswith("#"):
                    key, sep, value = text[1:].strip().partition("=")
                    if not sep:
                        raise TelemetryError(f"{path}:{lineno}: malformed metadata line")
                    log.meta[key.strip()] = value.strip()
                    continue
                header = next(csv.reader([text]))
                if header != TELEMETRY_COLUMNS:
                    raise TelemetrySchemaError(
                        f"{path}:{lineno}: header mismatch; expected columns: "
                        + ",".join(TELEMETRY_COLUMNS))
                header_seen = True
                continue
            if not text:
                continue
            row = next(csv.reader([text]))
            if len(row) != len(TELEMETRY_COLUMNS):
                raise TelemetryError(
                    f"{path}:{lineno}: expected {len(TELEMETRY_COLUMNS)} fields, got {len(row)}")
            try:
                rec = TelemetryRecord.from_row(row)
            except ValueError as exc:
                raise TelemetryError(f"{path}:{lineno}: {exc}") from None
            try:
                log.append(rec)
            except TelemetryError as exc:
                raise TelemetryError(f"{path}:{lineno}: {exc}") from None
    if not header_seen:
        raise TelemetrySchemaError(f"{path}: missing header; expected columns: " + ",".join(TELEMETRY_COLUMNS))
    return log


# -- metrics ----------------------------------------------------------------------

@dataclass
class MetricWindows:
    """Time windows (inclusive) the metrics are evaluated over.

    ``attitude`` windows feed the roll/pitch maxima and envelope fraction;
    ``altitude`` feeds the altitude RMS and mean-thrust deflection estimate;
    ``morph`` feeds displacement and altitude deviation, falling back to
    ``altitude`` when absent.
    """

    attitude: list[tuple[float, float]]
    altitude: tuple[float, float]
    altitude_ref: float
    morph: tuple[float, float] | None = None
    morph_altitude_ref: float | None = None
    ei_eff: float = 0.85
    arm_length: float = 0.1095
    envelope_deg: float = 5.0

    def to_meta(self) -> dict[str, str]:
        meta = {
            "window.attitude": ";".join(f"{a!r},{b!r}" for a, b in self.attitude),
            "window.altitude": f"{self.altitude[0]!r},{self.altitude[1]!r}",
            "window.altitude_ref": repr(self.altitude_ref),
            "arm.ei_eff": repr(self.ei_eff),
            "arm.length_m": repr(self.arm_length),
            "metrics.envelope_deg": repr(self.envelope_deg),
        }
        if self.morph is not None:
            meta["window.morph"] = f"{self.morph[0]!r},{self.morph[1]!r}"
            meta["window.morph_altitude_ref"] = repr(self.morph_altitude_ref)
        return meta

    @classmethod
    def from_meta(cls, meta: dict[str, str]) -> "MetricWindows":
        def pair(s):
            a, b = s.split(",")
            return float(a), float(b)

        try:
            morph = pair(meta["window.morph"]) if "window.morph" in meta else None
            return cls(
                attitude=[pair(p) for p in meta["window.attitude"].split(";") if p],
                altitude=pair(meta["window.altitude"]),
                altitude_ref=float(meta["window.altitude_ref"]),
                morph=morph,
                morph_altitude_ref=float(meta["window.morph_altitude_ref"]) if morph else None,
                ei_eff=float(meta.get("arm.ei_eff", 0.85)),
                arm_length=float(meta.get("arm.length_m", 0.1095)),
                envelope_deg=float(meta.get("metrics.envelope_deg", 5.0)),
            )
        except (KeyError, ValueError) as exc:
            raise TelemetryError(f"bad metric window metadata: {exc}") from None

    @classmethod
    def whole_log(cls, log: "TelemetryLog") -> "MetricWindows":
        t0, t1 = log.records[0].t, log.records[-1].t
        return cls([(t0, t1)], (t0, t1), log.records[0].position[2])


@dataclass
class MetricsReport:
    altitude_rms_error_m: float
    max_abs_roll_deg: float
    max_abs_pitch_deg: float
    attitude_within_envelope_fraction: float
    net_horizontal_displacement_m: float
    displacement_heading_deg: float
    max_altitude_deviation_m: float
    passive_deflection_deg: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def format_text(self) -> str:
        width = max(len(f.name) for f in fields(self))
        return "\n".join(f"{f.name:<{width}}  {getattr(self, f.name):.6f}" for f in fields(self))


def write_metrics(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key, value in report.as_dict().items():
            writer.writerow([key, repr(float(value))])


def read_metrics(path: str | Path) -> MetricsReport:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return MetricsReport(**{k: float(v) for k, v in rows[1:]})


def _mask(t: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    return (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)


def compute_metrics(log: TelemetryLog, windows: MetricWindows | None = None) -> MetricsReport:
    if not log.records:
        raise TelemetryError("cannot compute metrics on an empty log")
    if windows is None:
        windows = MetricWindows.from_meta(log.meta) if "window.altitude" in log.meta \
            else MetricWindows.whole_log(log)
    a = log.array()
    t = a[:, 0]

    att = np.zeros_like(t, dtype=bool)
    for w in windows.attitude:
        att |= _mask(t, w)
    if not att.any():
        raise TelemetryError("attitude windows select no samples")
    roll, pitch = a[att, 7], a[att, 8]
    max_roll = float(np.max(np.abs(roll)))
    max_pitch = float(np.max(np.abs(pitch)))
    inside = (np.abs(roll) <= windows.envelope_deg) & (np.abs(pitch) <= windows.envelope_deg)
    frac = float(np.mean(inside))

    alt = _mask(t, windows.altitude)
    if not alt.any():
        raise TelemetryError("altitude window selects no samples")
    alt_rms = float(np.sqrt(np.mean((a[alt, 3] - windows.altitude_ref) ** 2)))
    mean_thrust = float(np.mean(a[alt, 18:22]))
    deflection = passive_deflection(mean_thrust, ArmStiffness(windows.ei_eff, windows.arm_length))

    if windows.morph is not None:
        mw, ref = _mask(t, windows.morph), windows.morph_altitude_ref
    else:
        mw, ref = alt, windows.altitude_ref
    if not mw.any():
        raise TelemetryError("morph window selects no samples")
    xy = a[mw, 1:3]
    dxy = xy[-1] - xy[0]
    disp = float(math.hypot(dxy[0], dxy[1]))
    heading = float(math.degrees(math.atan2(dxy[1], dxy[0])))
    dev = float(np.max(np.abs(a[mw, 3] - ref)))
    return MetricsReport(alt_rms, max_roll, max_pitch, frac, disp, heading, dev, deflection)


def write_plot_series(log: TelemetryLog, out_dir: str | Path) -> list[Path]:
    """Per-panel CSV series (position, velocity, curvature, attitude, thrust)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    a = log.array()
    panels = {
        "position": ["t", "px", "py", "pz"],
        "velocity": ["t", "vx", "vy", "vz"],
        "curvature": ["t", "beta1", "beta2", "beta3", "beta4",
                      "beta1_cmd", "beta2_cmd", "beta3_cmd", "beta4_cmd"],
        "attitude": ["t", "roll_deg", "pitch_deg", "yaw_deg"],
        "thrust": ["t", "T1", "T2", "T3", "T4"],
    }
    written = []
    for name, cols in panels.items():
        idx = [TELEMETRY_COLUMNS.index(c) for c in cols]
        path = out_dir / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for row in a[:, idx]:
                writer.writerow([repr(float(v)) for v in row])
        written.append(path)
    return written
