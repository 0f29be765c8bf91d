"""Simulation configuration: the experiment parameter set, a flat
``key = value`` config-file format, and SNR-grid parsing."""

import dataclasses
from dataclasses import dataclass

from .channel import AE_SCHEMES
from .modem import SUPPORTED_ORDERS, _int_log2

DETECTOR_NAMES = ("gsp", "ml", "mmse", "oracle", "sp")
CHANNEL_REDRAW_MODES = ("per-block", "per-group")


@dataclass(frozen=True)
class SimConfig:
    """All parameters of one Monte Carlo experiment.

    ``M``/``M_RF`` are the BS antenna and RF-chain counts, ``K`` the user
    count, ``n_t`` antennas per user, ``L`` the constellation order, ``P``
    the channel delay spread, ``Q`` the slots per CPSC block, and ``J`` the
    blocks per transmission group.  ``channel_redraw`` picks whether the
    fading is redrawn for every block of a group or held for the group.
    """

    M: int = 32
    M_RF: int = 12
    K: int = 4
    n_t: int = 4
    L: int = 4
    P: int = 4
    Q: int = 8
    J: int = 1
    rho_bs: float = 0.0
    rho_us: float = 0.0
    ae_scheme: str = "direct"
    phi: int = 1
    detectors: tuple = ("gsp",)
    snr_grid_db: tuple = (0.0, 10.0, 20.0, 30.0)
    trials: int = 100
    seed: int = 1
    channel_redraw: str = "per-block"

    def __post_init__(self):
        for name in ("M", "M_RF", "K", "n_t", "L", "P", "Q", "J", "trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        _int_log2(self.n_t, "n_t")
        if self.L not in SUPPORTED_ORDERS:
            raise ValueError(f"L must be one of {SUPPORTED_ORDERS}, got {self.L}")
        if self.M_RF > self.M:
            raise ValueError(f"M_RF={self.M_RF} exceeds M={self.M}")
        if self.P > self.Q:
            raise ValueError(f"P={self.P} exceeds Q={self.Q}")
        if not 0.0 <= self.rho_bs < 1.0 or not 0.0 <= self.rho_us < 1.0:
            raise ValueError("correlation coefficients must be in [0, 1)")
        if self.ae_scheme not in AE_SCHEMES:
            raise ValueError(f"ae_scheme must be one of {AE_SCHEMES}")
        if self.channel_redraw not in CHANNEL_REDRAW_MODES:
            raise ValueError(f"channel_redraw must be one of {CHANNEL_REDRAW_MODES}")
        unknown = set(self.detectors) - set(DETECTOR_NAMES)
        if unknown:
            raise ValueError(
                f"unknown detectors {sorted(unknown)}; available: {DETECTOR_NAMES}"
            )
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must be non-empty")


def parse_snr_grid(text):
    """Parse an SNR grid given as 'start:step:stop' or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range grid must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        values = []
        v = start
        while v <= stop + 1e-9:
            values.append(round(v, 9))
            v += step
        return tuple(values)
    return tuple(float(p) for p in text.split(",") if p.strip())


_FIELD_PARSERS = {
    "M": int, "M_RF": int, "K": int, "n_t": int, "L": int,
    "P": int, "Q": int, "J": int, "phi": int, "trials": int, "seed": int,
    "rho_bs": float, "rho_us": float,
    "ae_scheme": str, "channel_redraw": str,
    "detectors": lambda s: tuple(d.strip() for d in s.split(",") if d.strip()),
    "snr_grid_db": parse_snr_grid,
}


def parse_config_file(path):
    """Read a SimConfig from a flat key = value file.

    Blank lines and lines starting with '#' are ignored; unknown keys are
    rejected.  Fields not present keep their defaults.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _FIELD_PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate config key {key!r}")
            try:
                values[key] = _FIELD_PARSERS[key](value)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return SimConfig(**values)


def with_overrides(config, **overrides):
    """A copy of the config with the given fields replaced (None skipped)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **changes) if changes else config
