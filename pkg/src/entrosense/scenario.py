"""Sensor deployments: generation, distance matrices, noise, persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FieldFormatError, ParameterError

DEFAULT_PLACEMENT_STD = 0.7
DEFAULT_SIGMA = 50.0
DEFAULT_GAMMA_RANGE = (0.01, 0.2)


@dataclass(frozen=True, eq=False)
class SensorField:
    """M sensors around a collector at the origin.

    positions are (M, 2) in meters, sigma is the per-sensor signal standard
    deviation and gamma the per-sensor power draw in watts.
    """

    positions: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    seed: int = 0
    collector: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        sig = np.asarray(self.sigma, dtype=float).ravel()
        gam = np.asarray(self.gamma, dtype=float).ravel()
        m = pos.shape[0]
        if m < 1:
            raise ParameterError("a field needs at least one sensor")
        if sig.shape != (m,) or gam.shape != (m,):
            raise ParameterError(
                f"length mismatch: {m} positions, {sig.size} sigma, {gam.size} gamma"
            )
        if not np.all(np.isfinite(pos)):
            raise ParameterError("positions must be finite")
        if not np.all(sig > 0):
            raise ParameterError("every sigma must be > 0")
        if not np.all(gam > 0):
            raise ParameterError("every gamma must be > 0")
        for name, arr in (("positions", pos), ("sigma", sig), ("gamma", gam)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SensorField):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.sigma, other.sigma)
            and np.array_equal(self.gamma, other.gamma)
        )

    __hash__ = None


def generate_field(
    M: int,
    placement_std: float = DEFAULT_PLACEMENT_STD,
    sigma: float = DEFAULT_SIGMA,
    gamma_range=DEFAULT_GAMMA_RANGE,
    seed: int = 0,
) -> SensorField:
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    if not placement_std > 0:
        raise ParameterError(f"placement_std must be > 0, got {placement_std}")
    low, high = gamma_range
    if not (0 < low <= high):
        raise ParameterError(f"invalid gamma range [{low}, {high}]")
    rng = np.random.default_rng(seed)
    positions = rng.normal(0.0, placement_std, size=(M, 2))
    gamma = rng.uniform(low, high, size=M)
    return SensorField(positions, np.full(M, float(sigma)), gamma, seed=seed)


def distance_matrix(field: SensorField) -> np.ndarray:
    diff = field.positions[:, None, :] - field.positions[None, :, :]
    D = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(D, 0.0)
    return D


def perturb_distances(D: np.ndarray, rel_std: float, seed: int) -> np.ndarray:
    """Add zero-mean Gaussian error with std ``rel_std * d_ij`` to each pair.

    One draw per unordered pair, so the result stays symmetric; distances are
    floored at zero and the diagonal is untouched.
    """
    if rel_std < 0:
        raise ParameterError(f"rel_std must be >= 0, got {rel_std}")
    D = np.asarray(D, dtype=float)
    if rel_std == 0:
        return D.copy()
    rng = np.random.default_rng(seed)
    m = D.shape[0]
    iu = np.triu_indices(m, k=1)
    d = D[iu]
    noisy = np.maximum(0.0, d + rng.normal(0.0, 1.0, size=d.size) * rel_std * d)
    out = np.zeros_like(D)
    out[iu] = noisy
    return out + out.T


def field_to_json(field: SensorField) -> str:
    doc = {
        "m": field.M,
        "seed": int(field.seed),
        "positions": field.positions.tolist(),
        "sigma": field.sigma.tolist(),
        "gamma": field.gamma.tolist(),
    }
    return json.dumps(doc, indent=2) + "\n"


def save_field(field: SensorField, path) -> None:
    Path(path).write_text(field_to_json(field))


def load_field(path) -> SensorField:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FieldFormatError(exc.msg, path=path, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise FieldFormatError("top level must be an object", path=path, line=1)
    missing = [k for k in ("m", "seed", "positions", "sigma", "gamma") if k not in doc]
    if missing:
        raise FieldFormatError(f"missing key(s): {', '.join(missing)}", path=path)
    m = doc["m"]
    for key in ("positions", "sigma", "gamma"):
        if not isinstance(doc[key], list) or len(doc[key]) != m:
            n = len(doc[key]) if isinstance(doc[key], list) else "non-list"
            raise FieldFormatError(
                f"'{key}' has {n} entries, expected m={m}",
                path=path,
                line=_key_line(text, key),
            )
    if any(not isinstance(p, list) or len(p) != 2 for p in doc["positions"]):
        raise FieldFormatError(
            "each position must be [x, y]", path=path, line=_key_line(text, "positions")
        )
    try:
        return SensorField(doc["positions"], doc["sigma"], doc["gamma"], seed=int(doc["seed"]))
    except (ParameterError, TypeError, ValueError) as exc:
        bad = "gamma" if "gamma" in str(exc) else "sigma" if "sigma" in str(exc) else "m"
        raise FieldFormatError(str(exc), path=path, line=_key_line(text, bad)) from exc


def _key_line(text, key):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return lineno
    return None
