"""Run configuration: unit-aware parsing, validation, and fingerprinting.

Config files are JSON; command-line flags override file values.  Lengths
accept nm/um/mm/cm/m suffixes and angles accept deg/rad; bare numbers are
SI.  Everything is converted to SI at this boundary and the computational
modules never see units.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

from .coincidence import DetectorModel
from .phasematch import ConfigurationError, CrystalSetup, PumpSpec

_LENGTH_UNITS = {"nm": 1e-9, "um": 1e-6, "µm": 1e-6, "mm": 1e-3, "cm": 1e-2, "m": 1.0}
_ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}


class ConfigError(ConfigurationError):
    """Malformed or inconsistent run configuration."""


def parse_quantity(value, kind: str, key: str = "") -> float:
    """Parse a config value of the given kind ("length" | "angle" | "number").

    Numbers are taken as SI; strings must carry a unit suffix.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected number or unit string, got {value!r}")
    text = value.strip().replace(" ", "")
    units = {"length": _LENGTH_UNITS, "angle": _ANGLE_UNITS,
             "number": {}}.get(kind)
    if units is None:
        raise ConfigError(f"{key}: unknown quantity kind {kind!r}")
    for suffix in sorted(units, key=len, reverse=True):
        if text.endswith(suffix):
            try:
                return float(text[: -len(suffix)]) * units[suffix]
            except ValueError:
                raise ConfigError(f"{key}: cannot parse number in {value!r}") from None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"{key}: cannot parse {value!r}; accepted units: {sorted(units)}"
        ) from None


@dataclass(frozen=True)
class GridConfig:
    n: int = 64
    c1: float = 6.0
    c2: float = 1.5
    boundary_tol: float = 0.1
    memory_budget: int = 6 * 1024**3


@dataclass(frozen=True)
class EntanglementConfig:
    m: int | None = None  # None: use the fine grid size


@dataclass(frozen=True)
class CoincidenceConfig:
    pitch: float = 16e-6
    quantum_efficiency: float = 0.6
    dark_rate: float = 1e-3
    roi: tuple[int, int] | None = None  # None: auto-size to the grid
    mu_pairs: float = 5.0
    n_frames: int = 10000
    seed: int = 0

    def detector(self, roi: tuple[int, int]) -> DetectorModel:
        return DetectorModel(pitch=self.pitch,
                             quantum_efficiency=self.quantum_efficiency,
                             dark_rate=self.dark_rate, roi=roi)


@dataclass(frozen=True)
class RunConfig:
    """Full run description; defaults are the single-crystal working point
    (355 nm pump, 507 um waist, L = 5 mm, collinear-ish theta_p, z = 5 mm)."""

    pump: PumpSpec = field(default_factory=lambda: PumpSpec(355e-9, 507e-6))
    setup: CrystalSetup = field(
        default_factory=lambda: CrystalSetup.single(5e-3, math.radians(32.9)))
    z: float = 5e-3
    grid: GridConfig = field(default_factory=GridConfig)
    entanglement: EntanglementConfig = field(default_factory=EntanglementConfig)
    coincidence: CoincidenceConfig = field(default_factory=CoincidenceConfig)
    outdir: str = "."
    formats: tuple[str, ...] = ("grd", "csv", "pgm")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["formats"] = list(self.formats)
        return d

    def fingerprint(self) -> str:
        """Stable hash of the physics/seed configuration, embedded in every
        output.  Output location and formats are excluded so the same run
        written to two directories carries the same fingerprint."""
        d = self.to_dict()
        d.pop("outdir", None)
        d.pop("formats", None)
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_SCHEMA = {
    "pump": {"wavelength": "length", "waist": "length"},
    "crystal": {"kind": "str", "length": "length", "gap": "length",
                "theta_p": "angle"},
    "z": "length",
    "grid": {"n": "int", "c1": "float", "c2": "float",
             "boundary_tol": "float", "memory_budget": "int"},
    "entanglement": {"m": "int"},
    "coincidence": {"pitch": "length", "quantum_efficiency": "float",
                    "dark_rate": "float", "roi": "list", "mu_pairs": "float",
                    "n_frames": "int", "seed": "int"},
    "output": {"dir": "str", "formats": "list"},
}


def _check_keys(data: dict, schema: dict, path: str = "") -> None:
    for key, sub in data.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(schema[key], dict):
            if not isinstance(sub, dict):
                raise ConfigError(f"'{where}' must be a table of settings")
            _check_keys(sub, schema[key], where)


def build_config(data: dict) -> RunConfig:
    """Build a validated RunConfig from a (merged) plain dict."""
    _check_keys(data, _SCHEMA)
    defaults = RunConfig()

    pump_d = data.get("pump", {})
    pump = PumpSpec(
        wavelength=parse_quantity(pump_d.get("wavelength", defaults.pump.wavelength),
                                  "length", "pump.wavelength"),
        waist=parse_quantity(pump_d.get("waist", defaults.pump.waist),
                             "length", "pump.waist"),
    )

    cr = data.get("crystal", {})
    kind = cr.get("kind", defaults.setup.kind)
    if kind not in ("single", "double"):
        raise ConfigError(f"crystal.kind must be single|double, got {kind!r}")
    if kind == "single" and "gap" in cr:
        raise ConfigError("crystal.gap requires crystal.kind = double")
    try:
        setup = CrystalSetup(
            kind=kind,
            length=parse_quantity(cr.get("length", defaults.setup.length),
                                  "length", "crystal.length"),
            gap=parse_quantity(cr.get("gap", 0.0), "length", "crystal.gap"),
            theta_p=parse_quantity(cr.get("theta_p", defaults.setup.theta_p),
                                   "angle", "crystal.theta_p"),
        )
    except ConfigurationError as exc:
        raise ConfigError(f"crystal: {exc}") from exc

    g = data.get("grid", {})
    grid = GridConfig(
        n=int(g.get("n", defaults.grid.n)),
        c1=float(g.get("c1", defaults.grid.c1)),
        c2=float(g.get("c2", defaults.grid.c2)),
        boundary_tol=float(g.get("boundary_tol", defaults.grid.boundary_tol)),
        memory_budget=int(g.get("memory_budget", defaults.grid.memory_budget)),
    )
    if grid.n < 8 or (grid.n & (grid.n - 1)) != 0:
        raise ConfigError(f"grid.n must be a power of two >= 8, got {grid.n}")

    e = data.get("entanglement", {})
    m = e.get("m")
    ent = EntanglementConfig(m=int(m) if m is not None else None)
    if ent.m is not None and (ent.m < 2 or grid.n % ent.m != 0):
        raise ConfigError(f"entanglement.m must divide grid.n, got {ent.m}")

    c = data.get("coincidence", {})
    roi = c.get("roi")
    if roi is not None:
        roi = tuple(int(v) for v in roi)
        if len(roi) != 2:
            raise ConfigError("coincidence.roi must be [ny, nx]")
    coin = CoincidenceConfig(
        pitch=parse_quantity(c.get("pitch", defaults.coincidence.pitch),
                             "length", "coincidence.pitch"),
        quantum_efficiency=float(c.get("quantum_efficiency",
                                       defaults.coincidence.quantum_efficiency)),
        dark_rate=float(c.get("dark_rate", defaults.coincidence.dark_rate)),
        roi=roi,
        mu_pairs=float(c.get("mu_pairs", defaults.coincidence.mu_pairs)),
        n_frames=int(c.get("n_frames", defaults.coincidence.n_frames)),
        seed=int(c.get("seed", defaults.coincidence.seed)),
    )

    out = data.get("output", {})
    formats = tuple(out.get("formats", list(defaults.formats)))
    for fmt in formats:
        if fmt not in ("grd", "csv", "pgm"):
            raise ConfigError(f"output.formats: unknown format {fmt!r}")

    return RunConfig(pump=pump, setup=setup,
                     z=parse_quantity(data.get("z", defaults.z), "length", "z"),
                     grid=grid, entanglement=ent, coincidence=coin,
                     outdir=str(out.get("dir", defaults.outdir)),
                     formats=formats)


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], val)
        else:
            merged[key] = val
    return merged


def parse_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Load a JSON config file (optional) and apply flag overrides on top."""
    data: dict = {}
    if file_path is not None:
        try:
            with open(file_path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file_path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{file_path}: top level must be a JSON object")
    if overrides:
        data = _deep_merge(data, overrides)
    return build_config(data)
