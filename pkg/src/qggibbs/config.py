"""INI run configuration: schema, defaults, overrides and validation.

Example::

    [params]
    alpha = 1.0
    mu = 1.0
    beta = 1.0
    N = 5
    dt = 0.001
    T = 1.0
    M = 20000
    seed = 0

    [h]
    # one "j k re im" entry per line
    modes =
        1 1 1.0 0.0
        2 1 0.5 0.0

    [experiments]
    run = invariance conservation chaos regularity residual

Optional sections ``[invariance]``, ``[conservation]``, ``[chaos]``,
``[regularity]``, ``[residual]`` and ``[output]`` hold per-experiment
settings; every key and its default is listed in ``SCHEMA``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .gibbs import DEFAULT_TOPOGRAPHY

EXPERIMENTS = ("invariance", "conservation", "chaos", "regularity", "residual")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _names(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


# section -> key -> (parser, default, required)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any, bool]]] = {
    "params": {
        "alpha": (float, None, True),
        "mu": (float, None, True),
        "beta": (float, None, True),
        "n": (_int, None, True),
        "dt": (float, 1e-3, False),
        "t": (float, 1.0, False),
        "m": (_int, 20000, False),
        "seed": (_int, 0, False),
    },
    "experiments": {"run": (_names, list(EXPERIMENTS), False)},
    "invariance": {
        "wrong_variance_factor": (float, 1.1, False),
        "coarse_dt": (float, 0.1, False),
    },
    "conservation": {
        "dt": (float, 0.1, False),
        "t": (float, 1.0, False),
        "refinements": (_int, 3, False),
        "members": (_int, 16, False),
    },
    "chaos": {"m": (_int, 100000, False), "phi_cutoff": (_int, 10, False)},
    "regularity": {
        "m_list": (_floats, [10.0, 100.0, 1000.0, 10000.0], False),
        "deltas": (_floats, [0.0, 0.5, 1.0, 1.5], False),
        "flat_tol": (float, 0.01, False),
    },
    "residual": {
        "dt_list": (_floats, [0.1, 0.05, 0.025, 0.0125], False),
        "t": (float, 1.0, False),
        "min_order": (float, 1.9, False),
    },
    "output": {"grid_snapshots": (_bool, False, False), "grid_size": (_int, 64, False)},
}

DEFAULT_TEXT = """\
[params]
alpha = 1.0
mu = 1.0
beta = 1.0
N = 5
dt = 0.001
T = 1.0
M = 20000
seed = 0

[h]
modes =
""" + "".join(f"    {j} {k} {v} 0.0\n" for (j, k), v in DEFAULT_TOPOGRAPHY.items())


class ConfigError(ValueError):
    """Schema violation; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics if d.level == "error"))


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.field}: {self.message}"


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]]
    h: dict[tuple[int, int], complex]
    source_text: str
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key.lower()]

    @property
    def experiments(self) -> list[str]:
        return self.values["experiments"]["run"]

    def digest(self) -> str:
        """Hash of the effective (parsed, overridden) configuration."""
        payload = {
            "values": self.values,
            "h": sorted([j, k, v.real, v.imag] for (j, k), v in self.h.items()),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def params(self):
        from .gibbs import GibbsParams
        from .spectral import SpectralField

        p = self.values["params"]
        N = p["n"]
        # h may carry modes beyond the run cutoff; GibbsParams projects it
        cutoff = max([N] + [j * j + k * k for j, k in self.h])
        h = SpectralField.from_modes(cutoff, self.h)
        return GibbsParams(alpha=p["alpha"], mu=p["mu"], beta=p["beta"], h=h, N=N)


def _parse_h(text: str, diags: list[Diagnostic]) -> dict[tuple[int, int], complex]:
    out: dict[tuple[int, int], complex] = {}
    for lineno, line in enumerate(text.strip().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 4:
            diags.append(Diagnostic("error", f"h.modes[{lineno}]", f"expected 'j k re im', got {line!r}"))
            continue
        try:
            j, k = _int(parts[0]), _int(parts[1])
            v = complex(float(parts[2]), float(parts[3]))
        except ValueError as exc:
            diags.append(Diagnostic("error", f"h.modes[{lineno}]", str(exc)))
            continue
        where = f"h.modes[{lineno}]"
        if k < 1:
            diags.append(Diagnostic("error", where, f"sine wavenumber k must be >= 1, got {k}"))
            continue
        if j == 0 and v.imag != 0:
            diags.append(Diagnostic("error", where, "j = 0 coefficient must be real (conjugate symmetry)"))
            continue
        if (j, k) in out:
            diags.append(Diagnostic("error", where, f"duplicate mode ({j}, {k})"))
            continue
        partner = out.get((-j, k))
        if partner is not None and abs(partner - v.conjugate()) > 1e-12 * max(1.0, abs(v)):
            diags.append(Diagnostic("error", where, f"modes ({j},{k}) and ({-j},{k}) are not conjugate"))
            continue
        out[(j, k)] = v
    return out


def _check_ranges(values: dict[str, dict[str, Any]], diags: list[Diagnostic]) -> None:
    p = values["params"]

    def err(f, msg):
        diags.append(Diagnostic("error", f, msg))

    if p.get("alpha") is not None and not p["alpha"] > 0:
        err("params.alpha", f"must be > 0, got {p['alpha']}")
    if p.get("mu") is not None and not p["mu"] > 0:
        err("params.mu", f"must be > 0, got {p['mu']}")
    if p.get("n") is not None and p["n"] < 1:
        err("params.N", f"must be >= 1, got {p['n']}")
    if p.get("beta") == 0:
        diags.append(Diagnostic("warning", "params.beta", "beta = 0 is outside the existence hypotheses"))
    for sec, key in (("params", "dt"), ("conservation", "dt"), ("invariance", "coarse_dt")):
        if not values[sec][key] > 0:
            err(f"{sec}.{key}", f"must be > 0, got {values[sec][key]}")
    for sec, key in (("params", "t"), ("conservation", "t"), ("residual", "t")):
        if values[sec][key] < 0:
            err(f"{sec}.{key}", f"must be >= 0, got {values[sec][key]}")
    if values["params"]["m"] < 1000 and "invariance" in values["experiments"]["run"]:
        err("params.M", "invariance experiment needs M >= 1000")
    if any(not d > 0 for d in values["residual"]["dt_list"]) or len(values["residual"]["dt_list"]) < 2:
        err("residual.dt_list", "needs at least two positive step sizes")
    if len(values["regularity"]["m_list"]) < 2 or any(not m > 0 for m in values["regularity"]["m_list"]):
        err("regularity.M_list", "needs at least two positive values")
    for name in values["experiments"]["run"]:
        if name not in EXPERIMENTS:
            err("experiments.run", f"unknown experiment {name!r} (known: {', '.join(EXPERIMENTS)})")


def parse_config(text: str, overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    """Parse and validate; raises ConfigError listing every error found."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    diags: list[Diagnostic] = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([Diagnostic("error", "file", str(exc).splitlines()[0])]) from None
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            diags.append(Diagnostic("error", "--set", f"expected key=value, got {item!r}"))
            continue
        section, _, option = key.strip().rpartition(".")
        section = section or "params"
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    for section in cp.sections():
        if section not in SCHEMA and section != "h":
            diags.append(Diagnostic("error", section, "unknown section"))
            continue
        known = SCHEMA.get(section, {"modes": None})
        for key in cp.options(section):
            if key not in known:
                diags.append(Diagnostic("error", f"{section}.{key}", "unknown key"))
    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, default, required) in keys.items():
            if cp.has_option(section, key):
                raw = cp.get(section, key)
                try:
                    values[section][key] = parse(raw)
                except ValueError as exc:
                    diags.append(Diagnostic("error", f"{section}.{key}", f"cannot parse {raw!r}: {exc}"))
                    values[section][key] = default
            elif required:
                diags.append(Diagnostic("error", f"{section}.{key}", "missing required field"))
                values[section][key] = None
            else:
                values[section][key] = default
    h_text = cp.get("h", "modes", fallback="")
    h = _parse_h(h_text, diags)
    _check_ranges(values, diags)
    if any(d.level == "error" for d in diags):
        raise ConfigError(diags)
    return RunConfig(values, h, text, diags)


def load_config(path: str | Path | None, overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    text = DEFAULT_TEXT if path is None else Path(path).read_text()
    return parse_config(text, overrides)


def validate(path: str | Path) -> list[Diagnostic]:
    """Diagnostics for a config file: empty when valid, warnings allowed."""
    try:
        return load_config(path).diagnostics
    except ConfigError as exc:
        return exc.diagnostics
