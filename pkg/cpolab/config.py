"""
Run configuration: a sectioned `key = value` text file.

    # comment
    [system]
    gamma0_MHz = 5.2

Units ride in the key names. Every key is optional; the resolved file written
next to the outputs lists all of them, defaults included, and reading that
echo back gives the same run.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigIOError, DiagnosticList, ParseError
from .floquet import Calibration, SpectrumOptions
from .memory import Memory, MemoryOptions, PulseSequence, default_storage_times
from .params import MHZ, FieldDrive, MagneticEnvironment, Polarization, SystemParams
from .quadrature import VELOCITY_METHODS

RESOLVED_NAME = "config.resolved.conf"
MODELS = ("floquet", "rate")

_SECTION_RE = re.compile(r"^\s*\[(?P<name>[^\]]*)\]\s*(?:#.*)?$")
_KV_RE = re.compile(r"^\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>[^#\r\n]*?)\s*(?:#.*)?$")
_BLANK_RE = re.compile(r"^\s*(?:#.*)?$")


@dataclass(frozen=True)
class Key:
    name: str
    default: Any
    kind: str = "float"  # float | int | bool | choice | floats | choices
    choices: Tuple[str, ...] = ()


# gamma_opt_MHz defaults to gamma0_MHz / 2 and is filled in after parsing.
SCHEMA: Dict[str, Tuple[Key, ...]] = {
    "system": (
        Key("gamma0_MHz", 5.2),
        Key("gamma_t_kHz", 40.0),
        Key("gamma_opt_MHz", None),
        Key("doppler_hwhm_MHz", 190.0),
        Key("omega_c_MHz", 0.4),
        Key("omega_p_kHz", 70.0),
    ),
    "drive": (
        Key("polarization", Polarization.LIN_PERP_LIN.value, "choice", tuple(p.value for p in Polarization)),
        Key("coupling_detuning_MHz", 0.0),
        Key("delta_min_MHz", -1.5),
        Key("delta_max_MHz", 1.5),
        Key("delta_points", 241, "int"),
    ),
    "field": (
        Key("b0_G", 0.9),
        Key("db_dz_mG_cm", [0.0], "floats"),
        Key("cell_length_cm", 5.0),
        Key("zeeman_ground_MHz_G", -0.35),
        Key("zeeman_excited_MHz_G", -0.95),
        Key("excited_shift", True, "bool"),
    ),
    # the split rule puts velocity_nodes in its core and velocity_nodes // 3 in each tail
    "quadrature": (
        Key("velocity_nodes", 96, "int"),
        Key("velocity_method", "split", "choice", VELOCITY_METHODS),
        Key("z_nodes", 65, "int"),
        Key("check_convergence", False, "bool"),
    ),
    "calibration": (
        Key("enabled", True, "bool"),
        Key("line_center_transmission", 0.27),
        Key("optical_depth", -math.log(0.27)),
    ),
    "sequence": (
        Key("write_us", 100.0),
        Key("read_us", 8.0),
        Key("read_points", 400, "int"),
        Key("ramp_us", 0.0),
        Key("readout_us", 0.5),
        Key("storage_us", [float(t) for t in default_storage_times() * 1e6], "floats"),
        Key("pulse_storage_us", [0.0], "floats"),
        Key("memories", [m.value for m in Memory], "choices", tuple(m.value for m in Memory)),
    ),
    "sweep": (
        Key("gradients_mG_cm", [0.0, 15.0, 30.0, 45.0, 60.0], "floats"),
    ),
    "run": (
        Key("model", "floquet", "choice", MODELS),
        Key("workers", 1, "int"),
        Key("out_dir", "results", "str"),
    ),
}

_TRUE = ("on", "true", "yes", "1")
_FALSE = ("off", "false", "no", "0")


def _convert(key: Key, raw: str, where: str, diags: DiagnosticList) -> Any:
    try:
        if key.kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        if key.kind == "int":
            return int(raw)
        if key.kind == "bool":
            low = raw.lower()
            if low in _TRUE or low in _FALSE:
                return low in _TRUE
            raise ValueError(raw)
        if key.kind == "floats":
            items = [s.strip() for s in raw.split(",") if s.strip()]
            values = [float(s) for s in items]
            if not all(math.isfinite(v) for v in values):
                raise ValueError(raw)
            return values
        if key.kind == "choices":
            items = [s.strip().lower() for s in raw.split(",") if s.strip()]
            bad = [s for s in items if s not in key.choices]
            if bad or not items:
                diags.add("bad_value", f"{where}: expected a list of {'|'.join(key.choices)}, got {raw!r}")
                return None
            return items
        if key.kind == "choice":
            low = raw.lower()
            if low not in key.choices:
                diags.add("bad_value", f"{where}: expected one of {'|'.join(key.choices)}, got {raw!r}")
                return None
            return low
        return raw
    except ValueError:
        diags.add("bad_value", f"{where}: cannot read {raw!r} as {key.kind}")
        return None


def parse_sections(text: str, path: str = "<config>") -> Dict[str, Dict[str, Tuple[int, str]]]:
    """Raw `{section: {key: (line_no, value)}}`; structure errors only, values unchecked."""
    sections: Dict[str, Dict[str, Tuple[int, str]]] = {}
    current: Optional[str] = None
    for line_no, line in enumerate(text.splitlines(), 1):
        if _BLANK_RE.match(line):
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = m.group("name").strip().lower()
            sections.setdefault(current, {})
            continue
        m = _KV_RE.match(line)
        if not m or current is None:
            raise ParseError(path, line_no, line)
        sections[current][m.group("key")] = (line_no, m.group("value"))
    return sections


@dataclass(frozen=True)
class RunConfig:
    values: Dict[str, Dict[str, Any]]
    source: str = "<defaults>"

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls.from_text("")

    @classmethod
    def from_text(cls, text: str, path: str = "<config>") -> "RunConfig":
        raw = parse_sections(text, path)
        diags = DiagnosticList()
        values: Dict[str, Dict[str, Any]] = {}
        for section, entries in raw.items():
            if section not in SCHEMA:
                diags.add("unknown_key", f"{path}: unknown section [{section}]")
                continue
            known = {k.name for k in SCHEMA[section]}
            for name, (line_no, _) in entries.items():
                if name not in known:
                    diags.add("unknown_key", f"{path}:{line_no}: unknown key {name!r} in [{section}]")
        for section, keys in SCHEMA.items():
            block = values.setdefault(section, {})
            given = raw.get(section, {})
            for key in keys:
                if key.name in given:
                    line_no, text_value = given[key.name]
                    block[key.name] = _convert(key, text_value, f"{path}:{line_no} [{section}] {key.name}", diags)
                else:
                    block[key.name] = list(key.default) if isinstance(key.default, list) else key.default
        diags.raise_if_any()

        system = values["system"]
        if system["gamma_opt_MHz"] is None:
            system["gamma_opt_MHz"] = system["gamma0_MHz"] / 2.0
        config = cls(values, path)
        config.check()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigIOError(p, e.strerror or str(e)) from e
        return cls.from_text(text, str(p))

    def with_run(self, **overrides: Any) -> "RunConfig":
        """Copy with `[run]` keys replaced (command-line flags); None leaves a key alone."""
        values = {s: dict(block) for s, block in self.values.items()}
        for key, value in overrides.items():
            if value is not None:
                values["run"][key] = value
        config = RunConfig(values, self.source)
        config.check()
        return config

    def check(self) -> None:
        v = self.values
        diags = DiagnosticList()
        drive = v["drive"]
        if drive["delta_points"] < 1:
            diags.add("empty_grid", "[drive] delta_points must be >= 1")
        elif drive["delta_points"] > 1 and not drive["delta_max_MHz"] > drive["delta_min_MHz"]:
            diags.add("unsorted_grid", "[drive] delta_max_MHz must exceed delta_min_MHz")
        for section, name in (("field", "db_dz_mG_cm"), ("sequence", "pulse_storage_us"), ("sweep", "gradients_mG_cm")):
            if not v[section][name]:
                diags.add("empty_grid", f"[{section}] {name} is empty")
        storage = v["sequence"]["storage_us"]
        if any(b <= a for a, b in zip(storage, storage[1:])):
            diags.add("unsorted_grid", "[sequence] storage_us must be strictly increasing")
        if any(t < 0 for t in storage + v["sequence"]["pulse_storage_us"]):
            diags.add("bad_value", "[sequence] storage times must be >= 0")
        for section, name in (("quadrature", "velocity_nodes"), ("quadrature", "z_nodes"), ("run", "workers")):
            if v[section][name] < 1:
                diags.add("bad_value", f"[{section}] {name} must be >= 1")
        diags.raise_if_any()

    # typed views

    @property
    def params(self) -> SystemParams:
        s = self.values["system"]
        return SystemParams.from_frequencies(
            gamma0_MHz=s["gamma0_MHz"], gamma_t_kHz=s["gamma_t_kHz"], omega_c_MHz=s["omega_c_MHz"],
            omega_p_kHz=s["omega_p_kHz"], doppler_hwhm_MHz=s["doppler_hwhm_MHz"], gamma_opt_MHz=s["gamma_opt_MHz"])

    @property
    def polarization(self) -> Polarization:
        return Polarization(self.values["drive"]["polarization"])

    def drive(self, polarization: Polarization | None = None) -> FieldDrive:
        return FieldDrive.from_rabi(self.params, polarization or self.polarization,
                                    coupling_detuning=self.values["drive"]["coupling_detuning_MHz"] * MHZ)

    @property
    def deltas(self) -> np.ndarray:
        d = self.values["drive"]
        return np.linspace(d["delta_min_MHz"], d["delta_max_MHz"], d["delta_points"]) * MHZ

    @property
    def gradients(self) -> List[float]:
        return list(self.values["field"]["db_dz_mG_cm"])

    def environment(self, db_dz_mG_cm: float | None = None) -> MagneticEnvironment:
        f = self.values["field"]
        return MagneticEnvironment.from_units(
            b0_G=f["b0_G"], db_dz_mG_cm=self.gradients[0] if db_dz_mG_cm is None else db_dz_mG_cm,
            cell_length_cm=f["cell_length_cm"], zeeman_ground_MHz_G=f["zeeman_ground_MHz_G"],
            zeeman_excited_MHz_G=f["zeeman_excited_MHz_G"])

    @property
    def spectrum_options(self) -> SpectrumOptions:
        q, c = self.values["quadrature"], self.values["calibration"]
        return SpectrumOptions(
            velocity_nodes=q["velocity_nodes"], velocity_method=q["velocity_method"], z_nodes=q["z_nodes"],
            excited_shift=self.values["field"]["excited_shift"],
            calibration=Calibration(c["enabled"], c["line_center_transmission"], c["optical_depth"]))

    @property
    def check_convergence(self) -> bool:
        return bool(self.values["quadrature"]["check_convergence"])

    @property
    def memory_options(self) -> MemoryOptions:
        q = self.values["quadrature"]
        return MemoryOptions(q["velocity_nodes"], q["velocity_method"], q["z_nodes"],
                             self.values["field"]["excited_shift"])

    @property
    def sequence(self) -> PulseSequence:
        s = self.values["sequence"]
        return PulseSequence.from_us(write_us=s["write_us"], read_us=s["read_us"],
                                     read_points=s["read_points"], ramp_us=s["ramp_us"],
                                     readout_us=s["readout_us"])

    @property
    def storage_times(self) -> np.ndarray:
        return np.asarray(self.values["sequence"]["storage_us"], dtype=float) * 1e-6

    @property
    def pulse_storage_times(self) -> np.ndarray:
        return np.asarray(self.values["sequence"]["pulse_storage_us"], dtype=float) * 1e-6

    @property
    def memories(self) -> List[Memory]:
        return [Memory(m) for m in self.values["sequence"]["memories"]]

    @property
    def sweep_gradients(self) -> List[float]:
        return list(self.values["sweep"]["gradients_mG_cm"])

    @property
    def model(self) -> str:
        return self.values["run"]["model"]

    @property
    def workers(self) -> int:
        return int(self.values["run"]["workers"])

    @property
    def out_dir(self) -> Path:
        return Path(self.values["run"]["out_dir"])

    # echo

    def render(self) -> str:
        """Fully resolved configuration text, keys in schema order."""
        lines = ["# cpolab resolved configuration"]
        for section, keys in SCHEMA.items():
            lines.append("")
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key.name} = {_format(self.values[section][key.name])}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()

    def write_resolved(self, out_dir: Path) -> Path:
        path = Path(out_dir) / RESOLVED_NAME
        try:
            path.write_text(self.render(), encoding="utf-8", newline="\n")
        except OSError as e:
            raise ConfigIOError(path, e.strerror or str(e)) from e
        return path


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)
