"""Diffusion models ``dX = b(X) dt + sigma(X) dW`` on ``(ell, inf)``,
the three built-in presets, and the ``key=value`` model file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coeffexpr import Expr, compile_expr, parse, pretty_print
from .errors import ConfigInvalid, NonFinite

__all__ = [
    "DiffusionSpec",
    "bm_drift",
    "gbm",
    "logistic",
    "PRESETS",
    "parse_model",
    "load_model",
]


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients and state interval of a one-dimensional diffusion.

    ``ell`` is the left end point (``-inf`` allowed); the right end point is
    always ``+inf``. ``w`` is the reference point at which ``B(w) = 0``.
    ``params`` keeps the preset parameters (``mu``, ``kappa``, ``sigma0``)
    when it was built from a preset.
    """

    b: Expr
    sigma: Expr
    ell: float
    w: float
    name: str = "model"
    preset: str | None = None
    params: tuple = ()
    right: float = field(default=math.inf, init=False)

    def __post_init__(self):
        ell = float(self.ell)
        w = float(self.w)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "w", w)
        if math.isnan(ell) or ell == math.inf:
            raise ConfigInvalid(f"invalid left end point {ell!r}")
        if not (ell < w < math.inf):
            raise ConfigInvalid(f"reference point w={w!r} must lie in ({ell!r}, inf)")
        object.__setattr__(self, "_b", compile_expr(self.b))
        object.__setattr__(self, "_sigma", compile_expr(self.sigma))
        self._check_sigma()

    def _check_sigma(self):
        for x in self.probe_points():
            try:
                s = self._sigma(x)
            except NonFinite as exc:
                raise ConfigInvalid(f"sigma not finite at x={x!r}: {exc}") from None
            if not s * s > 0:
                raise ConfigInvalid(f"sigma^2 must be positive; sigma({x!r}) = {s!r}")

    def probe_points(self, n=41):
        """Spot-check grid in (ell, inf), geometric around ``w``."""
        if math.isfinite(self.ell):
            d = self.w - self.ell
            return self.ell + d * np.geomspace(1e-6, 1e3, n)
        return self.w + np.concatenate([-np.geomspace(1e3, 1e-3, n // 2), [0.0],
                                        np.geomspace(1e-3, 1e3, n // 2)])

    @property
    def param_dict(self):
        return dict(self.params)

    def drift(self, x):
        return self._b(x)

    def vol(self, x):
        return self._sigma(x)

    def variance(self, x):
        s = self._sigma(x)
        return s * s

    def g(self, x):
        """``2 b(x) / sigma(x)^2``, the integrand of ``B``."""
        s = self._sigma(x)
        return 2.0 * self._b(x) / (s * s)

    def in_domain(self, x):
        return np.asarray(x) > self.ell

    def to_config(self):
        lines = [f"name={self.name}"]
        if self.preset:
            lines.append(f"preset={self.preset}")
            lines += [f"{k}={v!r}" for k, v in self.params]
        else:
            lines.append(f"b={pretty_print(self.b)}")
            lines.append(f"sigma={pretty_print(self.sigma)}")
            lines.append(f"ell={'-inf' if self.ell == -math.inf else repr(self.ell)}")
        lines.append(f"w={self.w!r}")
        return "\n".join(lines) + "\n"


def _num(v):
    return repr(float(v))


def bm_drift(mu=0.5, w=0.0, name=None):
    """Brownian motion with drift ``-mu`` on the real line."""
    return DiffusionSpec(
        b=parse(f"-{_num(mu)}") if mu >= 0 else parse(_num(-mu)),
        sigma=parse("1"),
        ell=-math.inf,
        w=w,
        name=name or f"bm_drift(mu={mu})",
        preset="bm_drift",
        params=(("mu", float(mu)),),
    )


def gbm(mu=0.1, sigma0=1.0, w=1.0, name=None):
    """Geometric Brownian motion ``dY = mu Y dt + sigma0 Y dW`` on (0, inf)."""
    return DiffusionSpec(
        b=parse(f"({_num(mu)})*x"),
        sigma=parse(f"({_num(sigma0)})*x"),
        ell=0.0,
        w=w,
        name=name or f"gbm(mu={mu}, sigma={sigma0})",
        preset="gbm",
        params=(("mu", float(mu)), ("sigma0", float(sigma0))),
    )


def logistic(mu=0.5, kappa=0.1, sigma0=1.2, w=1.0, name=None):
    """Stochastic logistic model ``dX = X(mu - kappa X) dt + sigma0 X dW``."""
    return DiffusionSpec(
        b=parse(f"({_num(mu)})*x - ({_num(kappa)})*x^2"),
        sigma=parse(f"({_num(sigma0)})*x"),
        ell=0.0,
        w=w,
        name=name or f"logistic(mu={mu}, kappa={kappa}, sigma={sigma0})",
        preset="logistic",
        params=(("mu", float(mu)), ("kappa", float(kappa)), ("sigma0", float(sigma0))),
    )


PRESETS = {
    "bm_drift": (bm_drift, ("mu",)),
    "gbm": (gbm, ("mu", "sigma0")),
    "logistic": (logistic, ("mu", "kappa", "sigma0")),
}

_KEYS = {"name", "b", "sigma", "ell", "w", "preset", "mu", "kappa", "sigma0"}


def _parse_real(key, text):
    t = text.strip().lower()
    if t in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(t)
    except ValueError:
        raise ConfigInvalid(f"{key}: not a real number: {text!r}") from None


def parse_model(text, overrides=None):
    """Build a DiffusionSpec from ``key=value`` lines.

    Blank lines and ``#`` comments are ignored. Entries of ``overrides`` take
    precedence over keys found in ``text``.
    """
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        cfg[key] = value
    cfg.update(overrides or {})
    return _from_dict(cfg)


def _from_dict(cfg):
    unknown = set(cfg) - _KEYS
    if unknown:
        raise ConfigInvalid(f"unknown keys: {sorted(unknown)}")
    try:
        if "preset" in cfg:
            preset = cfg["preset"]
            if preset not in PRESETS:
                raise ConfigInvalid(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            factory, names = PRESETS[preset]
            kwargs = {k: _parse_real(k, cfg[k]) for k in names if k in cfg}
            if "w" in cfg:
                kwargs["w"] = _parse_real("w", cfg["w"])
            if "name" in cfg:
                kwargs["name"] = cfg["name"]
            extra = {"b", "sigma", "ell"} & set(cfg)
            if extra:
                raise ConfigInvalid(f"keys {sorted(extra)} cannot be combined with preset")
            return factory(**kwargs)
        missing = {"b", "sigma", "ell", "w"} - set(cfg)
        if missing:
            raise ConfigInvalid(f"missing keys: {sorted(missing)}")
        return DiffusionSpec(
            b=parse(cfg["b"]),
            sigma=parse(cfg["sigma"]),
            ell=_parse_real("ell", cfg["ell"]),
            w=_parse_real("w", cfg["w"]),
            name=cfg.get("name", "model"),
        )
    except SyntaxError as exc:
        raise ConfigInvalid(f"bad expression: {exc}") from None


def load_model(model, overrides=None):
    """Resolve a ``--model`` argument.

    ``model`` is either a path to a model file or an inline preset spec such
    as ``logistic:mu=0.5,kappa=0.1,sigma0=1.2`` (parameters optional).
    """
    path = Path(model)
    if path.is_file():
        return parse_model(path.read_text(encoding="utf-8"), overrides)
    head, _, rest = model.partition(":")
    if head not in PRESETS:
        raise ConfigInvalid(f"{model!r} is neither a model file nor a preset")
    cfg = {"preset": head}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigInvalid(f"bad preset parameter {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        cfg[k] = v
    cfg.update(overrides or {})
    return _from_dict(cfg)

