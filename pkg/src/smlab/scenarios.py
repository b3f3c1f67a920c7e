"""Named simulation setups and their INI-style configuration files.

A configuration file holds one ``[scenario NAME]`` section per scenario::

    [scenario fold]
    f = x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1
    eps = 0.01
    rho = -0.4
    x0 = 0
    y0 = 2
    t_end = 7

Keys: ``f`` (piecewise text), ``eps``, one of ``rho``/``m``, ``x0``,
``y0`` (comma-separated list allowed), ``t_end``, ``rtol``, ``atol``,
``tol`` (shadowing tolerance), ``kappa``, ``outputs`` (comma-separated
subset of ``trajectory, ctraj, exits, lens, verify``).  ``base = NAME``
starts from a built-in and overrides the keys given.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace

from .expr import ParseError
from .piecewise import PiecewiseFunction, parse_piecewise
from .sim import IntegrationOptions, SmParams

__all__ = ["ConfigError", "Scenario", "BUILTINS", "builtin", "load_config", "cisim_initial_logs"]

OUTPUT_KINDS = ("trajectory", "ctraj", "exits", "lens", "verify")

FOLD = "x<2*pi: cos(x)+cos(2*x)+0.4 ; else: -1"


class ConfigError(ValueError):
    """Configuration problem; the message names file, section and key."""


@dataclass(frozen=True)
class Scenario:
    name: str
    f_text: str
    eps: float
    rho: float | None = None
    m: float | None = None
    x0: float = 0.0
    y0: tuple[float, ...] = (1.0,)
    t_end: float = 7.0
    rtol: float = 1e-8
    atol: float = 1e-10
    tol: float = 0.15
    kappa: float | None = None
    outputs: tuple[str, ...] = ("trajectory", "ctraj", "exits")

    def __post_init__(self):
        if (self.rho is None) == (self.m is None):
            raise ConfigError(f"scenario {self.name!r}: give exactly one of rho, m")
        if not self.eps > 0:
            raise ConfigError(f"scenario {self.name!r}: eps must be positive")
        if not self.t_end > 0:
            raise ConfigError(f"scenario {self.name!r}: t_end must be positive")
        bad = [o for o in self.outputs if o not in OUTPUT_KINDS]
        if bad:
            raise ConfigError(f"scenario {self.name!r}: unknown outputs {bad}")

    @property
    def f(self) -> PiecewiseFunction:
        return parse_piecewise(self.f_text)

    @property
    def params(self) -> SmParams:
        if self.rho is not None:
            return SmParams.from_rho(self.eps, self.rho)
        return SmParams.from_m(self.eps, self.m)

    @property
    def options(self) -> IntegrationOptions:
        return IntegrationOptions(rtol=self.rtol, atol=self.atol, kappa=self.kappa)

    @property
    def x_max(self) -> float:
        return self.x0 + self.t_end

    def with_overrides(self, **kw) -> "Scenario":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "rho" in kw:
            kw["m"] = None
        elif "m" in kw:
            kw["rho"] = None
        return replace(self, **kw)


BUILTINS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("retard5", FOLD, 0.01, rho=-0.4, y0=(2.0,), t_end=7.0, outputs=("trajectory", "ctraj", "exits", "verify")),
        Scenario("retard10", "all: 0.5*cos(x)+0.1", 0.01, rho=-0.6, y0=(1.0,), t_end=7.5, outputs=("trajectory", "ctraj", "exits", "verify")),
        Scenario("retard5bis", FOLD, 0.01, rho=-0.1, y0=(2.0,), t_end=7.0, outputs=("trajectory", "ctraj", "exits", "verify")),
        Scenario("retard6bis", FOLD, 0.1, rho=-0.4, y0=(2.0,), t_end=7.0, tol=0.3, outputs=("trajectory", "ctraj", "exits", "verify")),
        Scenario(
            "cisim",
            "periodic=2*pi ; x<pi: 0.5*cos(x) ; else: 1.5+1.8*sin(x)",
            0.01,
            rho=-1.2,
            x0=1.0,
            y0=(),  # filled by cisim_initial_logs
            t_end=5.5,
            outputs=("trajectory", "exits", "lens"),
        ),
        Scenario("retard4", "all: -x", 0.01, rho=-0.4, x0=-2.0, y0=(1.0,), t_end=4.0, outputs=("trajectory", "ctraj", "exits", "verify")),
        Scenario("retard4bis", "x<0: 1 ; else: -1", 0.01, rho=-0.4, x0=-2.0, y0=(1.0,), t_end=4.0, outputs=("trajectory", "ctraj", "exits", "verify")),
    )
}

# eps values of the coarse-eps comparison figure
RETARD6BIS_EPS = (0.01, 0.1)


def builtin(name: str) -> Scenario:
    try:
        return BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in scenario {name!r}; known: {', '.join(sorted(BUILTINS))}") from None


def cisim_initial_logs(p: SmParams, count: int = 9) -> list[tuple[float, float]]:
    """``(sign, ln|y|)`` of ``y_k = (k - 5) * 0.2 * m`` for ``k = 1..count``.

    These points are far below double precision for realistic eps, so they
    are returned in log form; ``k = 5`` gives the axis itself, ``(0, -inf)``.
    """
    out = []
    for k in range(1, count + 1):
        c = (k - 5) * 0.2
        if c == 0:
            out.append((0.0, -math.inf))
        else:
            out.append((math.copysign(1.0, c), math.log(abs(c)) + p.log_m))
    return out


_FLOAT_KEYS = ("eps", "rho", "m", "x0", "t_end", "rtol", "atol", "tol", "kappa")


def _float(path, section, key, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{path}: [{section}] {key}: not a number: {raw!r}") from None


def load_config(path) -> list[Scenario]:
    """Scenarios of an INI file, in file order."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = []
    for section in cp.sections():
        head, _, name = section.partition(" ")
        if head != "scenario" or not name.strip():
            raise ConfigError(f"{path}: section [{section}] must be named [scenario NAME]")
        name = name.strip()
        sec = cp[section]
        kw: dict = {}
        for key, raw in sec.items():
            if key == "base":
                continue
            if key in _FLOAT_KEYS:
                kw[key] = _float(path, section, key, raw)
            elif key == "y0":
                kw[key] = tuple(_float(path, section, key, v) for v in raw.split(","))
            elif key == "f":
                try:
                    parse_piecewise(raw)
                except ParseError as exc:
                    raise ConfigError(f"{path}: [{section}] f: {exc}") from None
                kw[key + "_text"] = raw
            elif key == "outputs":
                kw[key] = tuple(v.strip() for v in raw.split(",") if v.strip())
            else:
                raise ConfigError(f"{path}: [{section}] unknown key {key!r}")
        try:
            if "base" in sec:
                base = builtin(sec["base"].strip())
                sc = base.with_overrides(**kw)
                sc = replace(sc, name=name)
            else:
                if "f_text" not in kw or "eps" not in kw:
                    raise ConfigError(f"{path}: [{section}] needs 'f' and 'eps' (or 'base')")
                sc = Scenario(name=name, **kw)
        except ConfigError as exc:
            raise ConfigError(f"{path}: [{section}] {exc}") from None
        out.append(sc)
    if not out:
        raise ConfigError(f"{path}: no [scenario NAME] sections")
    return out


def dump_config(scenarios: list[Scenario]) -> str:
    """INI text that :func:`load_config` reads back to ``scenarios``."""
    lines = []
    for s in scenarios:
        lines.append(f"[scenario {s.name}]")
        lines.append(f"f = {s.f_text}")
        for key in _FLOAT_KEYS:
            v = getattr(s, key)
            if v is not None:
                lines.append(f"{key} = {v!r}")
        if s.y0:
            lines.append("y0 = " + ", ".join(repr(v) for v in s.y0))
        lines.append("outputs = " + ", ".join(s.outputs))
        lines.append("")
    return "\n".join(lines)

