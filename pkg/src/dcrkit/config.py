"""Flat key = value configuration files.

One line per setting, ``#`` comments, values typed at the point of use.
Accessors record every key they resolve (including applied defaults) so a
command can echo its effective configuration.  List values are
comma-separated.

Example::

    # three-risk simulation
    n = 1000
    k = 3
    rate_1 = 0.02
    beta_1 = 0.2, 0.0, 1.1
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .models import training
from .simulator import GenerativeConfig


class Config:
    def __init__(self, raw: dict, source: str = "<config>"):
        self._raw = dict(raw)
        self.source = source
        self._resolved: dict = {}

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValidationError(
                    f"{source}:{lineno}: expected 'key = value', got {line!r}"
                )
            key, _, value = stripped.partition("=")
            key = key.strip()
            if not key:
                raise ValidationError(f"{source}:{lineno}: empty key")
            if key in raw:
                raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
            raw[key] = value.strip()
        return cls(raw, source)

    @classmethod
    def from_file(cls, path) -> "Config":
        try:
            with open(path) as fh:
                return cls.from_text(fh.read(), source=str(path))
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc

    def has(self, key: str) -> bool:
        return key in self._raw

    def _fetch(self, key, default, required):
        if key in self._raw:
            return self._raw[key]
        if required:
            raise ValidationError(f"{self.source}: missing required key {key!r}")
        return default

    def _record(self, key, value):
        if isinstance(value, (list, tuple, np.ndarray)):
            self._resolved[key] = ", ".join(str(v) for v in value)
        else:
            self._resolved[key] = str(value)
        return value

    def get_int(self, key, default=None, minimum=None):
        raw = self._fetch(key, default, default is None)
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"{self.source}: {key} must be an integer, got {raw!r}")
        if minimum is not None and value < minimum:
            raise ValidationError(f"{self.source}: {key} must be >= {minimum}, got {value}")
        return self._record(key, value)

    def get_float(self, key, default=None, positive=False):
        raw = self._fetch(key, default, default is None)
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"{self.source}: {key} must be a number, got {raw!r}")
        if positive and value <= 0:
            raise ValidationError(f"{self.source}: {key} must be positive, got {value}")
        return self._record(key, value)

    def get_floats(self, key, default=None, positive=False):
        raw = self._fetch(key, default, default is None)
        if isinstance(raw, str):
            parts = [p for p in (s.strip() for s in raw.split(",")) if p]
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise ValidationError(f"{self.source}: {key} must be numbers, got {raw!r}")
        else:
            values = [float(v) for v in raw]
        if not values:
            raise ValidationError(f"{self.source}: {key} must be nonempty")
        if positive and any(v <= 0 for v in values):
            raise ValidationError(f"{self.source}: {key} entries must be positive")
        self._record(key, values)
        return values

    def get_str(self, key, default=None, choices=None):
        value = self._fetch(key, default, default is None)
        if choices and value not in choices:
            raise ValidationError(
                f"{self.source}: {key} must be one of {sorted(choices)}, got {value!r}"
            )
        return self._record(key, value)

    def get_strs(self, key, default=None):
        raw = self._fetch(key, default, default is None)
        if isinstance(raw, str):
            values = [p for p in (s.strip() for s in raw.split(",")) if p]
        else:
            values = list(raw)
        if not values:
            raise ValidationError(f"{self.source}: {key} must be nonempty")
        self._record(key, values)
        return values

    def echo(self) -> str:
        """The effective configuration: every resolved key, defaults included."""
        lines = [f"# effective config ({self.source})"]
        lines += [f"{key} = {value}" for key, value in sorted(self._resolved.items())]
        return "\n".join(lines)


def load_generative_config(cfg: Config):
    """Build the simulator configuration; returns (config, n)."""
    n = cfg.get_int("n", minimum=1)
    k = cfg.get_int("k", minimum=1)
    d_dynamic = cfg.get_int("d_dynamic", minimum=0)
    d_static = cfg.get_int("d_static", minimum=0)
    rates = []
    betas = []
    for j in range(1, k + 1):
        rates.append(cfg.get_float(f"rate_{j}", positive=True))
        betas.append(np.array(cfg.get_floats(f"beta_{j}")))
    names = cfg.get_strs("risk_names", [f"risk{j}" for j in range(1, k + 1)])
    gen = GenerativeConfig(
        k=k,
        d_dynamic=d_dynamic,
        d_static=d_static,
        length_min=cfg.get_int("length_min", 1, minimum=1),
        length_max=cfg.get_int("length_max", 12, minimum=1),
        step_hours=cfg.get_float("step_hours", 1.0, positive=True),
        hazard_rates=tuple(rates),
        hazard_betas=tuple(betas),
        censor_rate=cfg.get_float("censor_rate", positive=True),
        seed=cfg.get_int("seed", 0),
        risk_names=tuple(names),
        withdrawal_coupling=cfg.get_float("withdrawal_coupling", 0.0),
    )
    return gen, n


def load_protocol(cfg: Config) -> training.TrainProtocol:
    return training.TrainProtocol(
        batch_size=cfg.get_int("batch_size", 32, minimum=1),
        max_epochs=cfg.get_int("max_epochs", 100, minimum=1),
        patience=cfg.get_int("patience", 10, minimum=1),
        val_fraction=cfg.get_float("val_fraction", 0.2, positive=True),
        val_deltas=tuple(cfg.get_floats("val_deltas", [24.0, 48.0, 72.0], positive=True)),
        m_bins=cfg.get_int("m_bins", 30, minimum=1),
        hidden=cfg.get_int("hidden", 16, minimum=1),
        dec_hidden=cfg.get_int("dec_hidden", 0, minimum=0),
        sigma=cfg.get_float("sigma", 0.1, positive=True),
    )


def load_hyper_grid(cfg: Config):
    """The searched combinations; defaults to the published grid."""
    lrs = cfg.get_floats("learning_rates", [1e-4, 5e-4, 1e-3], positive=True)
    alphas = cfg.get_floats("alphas", [0.5, 1.0, 5.0], positive=True)
    betas = cfg.get_floats("betas", [0.05, 0.1, 0.5], positive=True)
    dropouts = cfg.get_floats("dropouts", [0.2, 0.4])
    if any(not 0.0 <= dr < 1.0 for dr in dropouts):
        raise ValidationError(f"{cfg.source}: dropouts must lie in [0, 1)")
    return tuple(
        training.HyperCombo(lr, a, b, dr)
        for lr in lrs for a in alphas for b in betas for dr in dropouts
    )
