"""Synthetic mixed-noise generators for hyperspectral cubes.

Seven degradation kinds over clean data in [0, 1]: per-band Gaussian with
random sigma (noniid), vertical stripes, dead column runs, salt-and-pepper
impulses, their per-band mixture, plus fixed-sigma and blind i.i.d.
Gaussian.  Parameter ranges follow the common mixed-noise benchmark
protocol (band sigma drawn from [10, 70]/255, stripe offsets within
+-0.25, deadline runs 1-3 columns wide) and every range is overridable.
Outputs are NOT clipped back to [0, 1]; denoisers see raw corruption.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import RangeError

KINDS = ("noniid", "stripe", "deadline", "impulse", "mixture", "gaussian", "blind")

# Protocol-derived default sigma ranges, 0-255 intensity convention.
NONIID_SIGMA_RANGE = (10.0, 70.0)
BLIND_SIGMA_RANGE = (30.0, 70.0)
DEFAULT_GAUSSIAN_SIGMA = 50.0


@dataclass
class NoiseSpec:
    """Declarative noise recipe; deterministic given the seed."""

    kind: str = "gaussian"
    sigma: float | tuple[float, float] | None = None
    band_fraction: float = 1.0 / 3.0
    column_fraction: float = 0.1
    impulse_prob: float = 0.3
    stripe_offset: float = 0.25
    deadline_max_width: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for name in ("band_fraction", "column_fraction", "impulse_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.sigma is not None:
            lo = self.sigma if np.isscalar(self.sigma) else min(self.sigma)
            if lo < 0:
                raise ValueError("sigma must be nonnegative")
        if self.deadline_max_width < 1:
            raise ValueError("deadline_max_width must be >= 1")

    def sigma_range(self) -> tuple[float, float]:
        """Resolved sigma draw range for the random-sigma kinds."""
        default = BLIND_SIGMA_RANGE if self.kind == "blind" else NONIID_SIGMA_RANGE
        if self.sigma is None:
            return default
        if np.isscalar(self.sigma):
            return (float(self.sigma), float(self.sigma))
        lo, hi = self.sigma
        return (float(lo), float(hi))

    def to_text(self) -> str:
        sigma = self.sigma
        if sigma is None:
            sigma_txt = ""
        elif np.isscalar(sigma):
            sigma_txt = repr(float(sigma))
        else:
            sigma_txt = f"{float(sigma[0])!r},{float(sigma[1])!r}"
        lines = [
            f"kind = {self.kind}",
            f"sigma = {sigma_txt}",
            f"band_fraction = {self.band_fraction!r}",
            f"column_fraction = {self.column_fraction!r}",
            f"impulse_prob = {self.impulse_prob!r}",
            f"stripe_offset = {self.stripe_offset!r}",
            f"deadline_max_width = {self.deadline_max_width}",
            f"seed = {self.seed}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NoiseSpec":
        from .serialization import parse_kv_text

        kv = parse_kv_text(text)
        spec = cls()
        if "kind" in kv:
            spec = replace(spec, kind=kv["kind"])
        if kv.get("sigma"):
            parts = [float(p) for p in kv["sigma"].split(",")]
            spec = replace(spec, sigma=parts[0] if len(parts) == 1 else tuple(parts))
        for name, cast in (
            ("band_fraction", float),
            ("column_fraction", float),
            ("impulse_prob", float),
            ("stripe_offset", float),
            ("deadline_max_width", int),
            ("seed", int),
        ):
            if name in kv:
                spec = replace(spec, **{name: cast(kv[name])})
        return spec


def _pick_bands(rng: np.random.Generator, n3: int, fraction: float) -> np.ndarray:
    count = max(1, int(round(fraction * n3))) if fraction > 0 else 0
    if count == 0:
        return np.array([], dtype=int)
    return np.sort(rng.choice(n3, size=min(count, n3), replace=False))


def _add_stripes(rng, out, band, column_fraction, offset):
    n2 = out.shape[1]
    ncols = max(1, int(round(column_fraction * n2)))
    cols = rng.choice(n2, size=min(ncols, n2), replace=False)
    offsets = rng.uniform(-offset, offset, size=cols.size)
    out[:, cols, band] += offsets[None, :]
    return cols


def _add_deadlines(rng, out, band, column_fraction, max_width):
    n2 = out.shape[1]
    target = max(1, int(round(column_fraction * n2)))
    cols: set[int] = set()
    while len(cols) < target:
        start = int(rng.integers(0, n2))
        width = int(rng.integers(1, max_width + 1))
        cols.update(range(start, min(start + width, n2)))
    cols_arr = np.array(sorted(cols))
    out[:, cols_arr, band] = 0.0
    return cols_arr


def _add_impulses(rng, out, band, prob):
    n1, n2 = out.shape[:2]
    hit = rng.random((n1, n2)) < prob
    values = rng.integers(0, 2, size=(n1, n2)).astype(np.float64)
    plane = out[:, :, band]
    plane[hit] = values[hit]
    return int(hit.sum())


def apply_noise_with_info(clean: np.ndarray, spec: NoiseSpec):
    """Degrade a clean cube; also return the realized noise parameters."""
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim != 3:
        raise RangeError(f"clean cube must be 3-way, got shape {clean.shape}")
    if clean.min() < 0.0 or clean.max() > 1.0:
        raise RangeError("clean data must lie in [0, 1]")
    n1, n2, n3 = clean.shape
    rng = np.random.default_rng(spec.seed)
    info: dict = {"kind": spec.kind, "seed": spec.seed}

    if spec.kind in ("gaussian", "blind"):
        if spec.kind == "gaussian":
            sigma = (
                DEFAULT_GAUSSIAN_SIGMA
                if spec.sigma is None
                else float(spec.sigma if np.isscalar(spec.sigma) else spec.sigma[0])
            )
        else:
            lo, hi = spec.sigma_range()
            sigma = float(rng.uniform(lo, hi))
        info["sigma"] = sigma
        out = clean + rng.standard_normal(clean.shape) * (sigma / 255.0)
        return out, info

    lo, hi = spec.sigma_range()
    band_sigma = rng.uniform(lo, hi, size=n3) / 255.0
    out = clean + rng.standard_normal(clean.shape) * band_sigma[None, None, :]
    info["band_sigma"] = band_sigma

    if spec.kind == "noniid":
        return out, info

    if spec.kind in ("stripe", "deadline", "impulse"):
        bands = _pick_bands(rng, n3, spec.band_fraction)
        info["bands"] = bands
        for b in bands:
            if spec.kind == "stripe":
                _add_stripes(rng, out, b, spec.column_fraction, spec.stripe_offset)
            elif spec.kind == "deadline":
                _add_deadlines(rng, out, b, spec.column_fraction, spec.deadline_max_width)
            else:
                _add_impulses(rng, out, b, spec.impulse_prob)
        return out, info

    # mixture: each band independently afflicted by a random subset of
    # {stripe, deadline, impulse}, each with probability band_fraction.
    afflicted = {"stripe": [], "deadline": [], "impulse": []}
    for b in range(n3):
        draw = rng.random(3)
        if draw[0] < spec.band_fraction:
            _add_stripes(rng, out, b, spec.column_fraction, spec.stripe_offset)
            afflicted["stripe"].append(b)
        if draw[1] < spec.band_fraction:
            _add_deadlines(rng, out, b, spec.column_fraction, spec.deadline_max_width)
            afflicted["deadline"].append(b)
        if draw[2] < spec.band_fraction:
            _add_impulses(rng, out, b, spec.impulse_prob)
            afflicted["impulse"].append(b)
    info["afflicted"] = afflicted
    return out, info


def apply_noise(clean: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Degrade a clean cube per the spec; deterministic given spec.seed."""
    out, _ = apply_noise_with_info(clean, spec)
    return out
