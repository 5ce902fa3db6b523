"""Data generators for the seven simulation settings.

Settings I and II draw i.i.d. Gaussian rows with covariance ``Sigma`` (and
``2 Sigma`` for Y in Setting II), where ``Sigma_jk = (1 + |j - k|)^{-1/4}``.
Settings III-VII give every observation its own covariance
``Omega_i = D_i Sigma D_i`` with ``D_i = diag(sqrt(phi_i))``, ``phi_ij ~ U(1, 2)``
for X and ``U(1, 3)`` for Y, and feed ``Omega_i^{1/2}`` a mix of innovation
laws. The mean of X is always zero.

Fixed quantities (the theta draws behind the mean of Y, the phi scalings and
the covariance square roots) are derived from explicit seeds and cached, so
they stay the same across Monte Carlo runs.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .matops import poly_decay_cov, scaled_cov, sym_sqrt
from .rng import INNOVATIONS, SeedSpec, derive_stream, sample_uniform

__all__ = [
    "SETTINGS",
    "REFERENCE_SIZES",
    "MeanSpec",
    "SettingSpec",
    "build_mean_vector",
    "signal_strength",
    "gen_pair",
    "replicate_observation",
    "innovation_layout",
]

SETTINGS = ("I", "II", "III", "IV", "V", "VI", "VII")
REFERENCE_SIZES = {
    "I": (200, 300, 1000),
    "II": (200, 300, 1000),
    "III": (200, 300, 1000),
    "IV": (100, 400, 1000),
    "V": (200, 300, 1000),
    "VI": (200, 300, 1000),
    "VII": (200, 300, 1000),
}
MEAN_MODES = ("uniform-theta", "fixed-delta")

# innovations replacing the normal block in Settings V and VI
_HEAVY = {"V": "t5", "VI": "chisq4"}

# cache budget for per-observation square roots, in bytes
SQRT_CACHE_WARN = 2 * 1024**3


@dataclass(frozen=True)
class MeanSpec:
    """Mean vector of Y: ``floor(beta p)`` leading nonzeros, the rest zero.

    ``uniform-theta`` fills the nonzeros with fixed draws from U(-delta, delta);
    ``fixed-delta`` sets them all to ``delta``.
    """

    p: int
    beta: float = 0.0
    delta: float = 0.0
    mode: str = "uniform-theta"
    theta_seed: SeedSpec = SeedSpec(1)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.delta >= 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.mode not in MEAN_MODES:
            raise ValueError(f"mode must be one of {MEAN_MODES}, got {self.mode!r}")
        object.__setattr__(self, "theta_seed", SeedSpec.coerce(self.theta_seed))

    @property
    def n_nonzero(self) -> int:
        # guard against beta * p landing a hair below an integer
        return int(math.floor(self.beta * self.p + 1e-9))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["theta_seed"] = self.theta_seed.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class SettingSpec:
    """Complete parameterization of one simulation setting.

    Use :meth:`reference` to get the reference sizes, optionally overridden.

    Parameters
    ----------
    setting : {"I", "II", "III", "IV", "V", "VI", "VII"}
    n, m, p : int
        Sample sizes and dimension.
    mean : MeanSpec
    phi_seed : SeedSpec
        Seed of the fixed covariance scalings (Settings III-VII).
    fast_transform : bool
        Generate ``D_i (Sigma^{1/2} z)`` instead of ``Omega_i^{1/2} z``. Same
        covariance, different law for non-Gaussian innovations.
    replace_all_innovations : bool
        Settings V/VI only: use the heavy-tailed or skewed law in every
        coordinate instead of only the leading ``floor(2p/5)`` block.
    """

    setting: str
    n: int
    m: int
    p: int
    mean: MeanSpec = None
    phi_seed: SeedSpec = SeedSpec(2)
    fast_transform: bool = False
    replace_all_innovations: bool = False

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.n < 2 or self.m < 2:
            raise ValueError(f"need n, m >= 2, got n={self.n}, m={self.m}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        mean = self.mean
        if mean is None:
            mean = MeanSpec(self.p, mode=self.default_mode(self.setting))
        elif isinstance(mean, dict):
            mean = MeanSpec.from_dict(mean)
        if mean.p != self.p:
            raise ValueError(f"mean vector has p={mean.p}, setting has p={self.p}")
        if mean.mode != self.default_mode(self.setting):
            raise ValueError(f"Setting {self.setting} uses mean mode {self.default_mode(self.setting)!r}, got {mean.mode!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "phi_seed", SeedSpec.coerce(self.phi_seed))

    @staticmethod
    def default_mode(setting):
        return "fixed-delta" if setting == "VII" else "uniform-theta"

    @classmethod
    def reference(cls, setting, *, n=None, m=None, p=None, beta=0.0, delta=0.0, theta_seed=1, phi_seed=2, **kw):
        n0, m0, p0 = REFERENCE_SIZES[setting]
        n, m, p = n or n0, m or m0, p or p0
        mean = MeanSpec(p, beta, delta, cls.default_mode(setting), SeedSpec.coerce(theta_seed))
        return cls(setting, n, m, p, mean, SeedSpec.coerce(phi_seed), **kw)

    @property
    def scale_reduced(self) -> bool:
        return (self.n, self.m, self.p) != REFERENCE_SIZES[self.setting]

    def with_cell(self, delta, beta) -> "SettingSpec":
        """Copy with the mean vector's signal strength and sparsity replaced."""
        return dataclasses.replace(self, mean=dataclasses.replace(self.mean, delta=float(delta), beta=float(beta)))

    def to_dict(self):
        return {
            "setting": self.setting,
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "mean": self.mean.to_dict(),
            "phi_seed": self.phi_seed.to_dict(),
            "fast_transform": self.fast_transform,
            "replace_all_innovations": self.replace_all_innovations,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "mean" in d and isinstance(d["mean"], dict):
            d["mean"] = MeanSpec.from_dict(d["mean"])
        return cls(**d)


def signal_strength(r, p, n, m):
    """Signal strength ``{2 r log(p) / max(n, m)}^{1/2}`` for a rate constant ``r``."""
    return math.sqrt(2.0 * r * math.log(p) / max(n, m))


@lru_cache(maxsize=64)
def _theta_unit(seed: SeedSpec, p: int):
    u = sample_uniform(derive_stream(seed), p, -1.0, 1.0)
    u.setflags(write=False)
    return u


def build_mean_vector(spec: MeanSpec) -> np.ndarray:
    """Mean vector of Y for ``spec``.

    The theta draws are ``delta * U`` with ``U ~ U(-1, 1)`` fixed by
    ``theta_seed``, so cells that differ only in ``delta`` or ``beta`` share
    the same underlying draws.
    """
    mu = np.zeros(spec.p)
    k = spec.n_nonzero
    if k == 0 or spec.delta == 0.0:
        return mu
    if spec.mode == "fixed-delta":
        mu[:k] = spec.delta
    else:
        mu[:k] = spec.delta * _theta_unit(spec.theta_seed, spec.p)[:k]
    return mu


def innovation_layout(spec: SettingSpec):
    """Return ``[(law, n_columns), ...]`` describing the innovation blocks."""
    p = spec.p
    if spec.setting in ("I", "II"):
        return [("normal", p)]
    lead = _HEAVY.get(spec.setting, "normal")
    if spec.replace_all_innovations and spec.setting in _HEAVY:
        return [(lead, p)]
    k = (2 * p) // 5
    return [(lead, k), ("gamma", p - k)]


@dataclass(frozen=True)
class _Structure:
    sqrt_sigma: np.ndarray = None
    y_scale: float = 1.0
    root_x: np.ndarray = None  # (n, p, p) per-observation square roots
    root_y: np.ndarray = None
    d_x: np.ndarray = None  # (n, p) sqrt(phi) for the fast transform
    d_y: np.ndarray = None
    phi: np.ndarray = field(default=None, repr=False)
    phi_star: np.ndarray = field(default=None, repr=False)


def _phi(spec: SettingSpec):
    # phi rows cover max(n, m) observations; X uses the first n
    stream = derive_stream(spec.phi_seed)
    phi = sample_uniform(stream, (max(spec.n, spec.m), spec.p), 1.0, 2.0)
    phi_star = sample_uniform(stream, (spec.m, spec.p), 1.0, 3.0)
    return phi, phi_star


@lru_cache(maxsize=8)
def _structure(setting, n, m, p, phi_seed, fast):
    spec = SettingSpec(setting, n, m, p, phi_seed=phi_seed)
    sigma = poly_decay_cov(p)
    root = sym_sqrt(sigma)
    if setting in ("I", "II"):
        return _Structure(sqrt_sigma=root, y_scale=math.sqrt(2.0) if setting == "II" else 1.0)
    phi, phi_star = _phi(spec)
    phi = phi[:n]
    if fast:
        return _Structure(sqrt_sigma=root, d_x=np.sqrt(phi), d_y=np.sqrt(phi_star), phi=phi, phi_star=phi_star)
    nbytes = (n + m) * p * p * 8
    if nbytes > SQRT_CACHE_WARN:
        warnings.warn(
            f"caching {(n + m)} square roots of {p}x{p} covariances needs {nbytes / 1024**3:.1f} GiB; "
            "consider fast_transform=True",
            ResourceWarning,
            stacklevel=3,
        )
    root_x = np.stack([sym_sqrt(scaled_cov(sigma, f)) for f in phi])
    root_y = np.stack([sym_sqrt(scaled_cov(sigma, f)) for f in phi_star])
    return _Structure(root_x=root_x, root_y=root_y, phi=phi, phi_star=phi_star)


def _structure_for(spec: SettingSpec) -> _Structure:
    return _structure(spec.setting, spec.n, spec.m, spec.p, spec.phi_seed, spec.fast_transform)


def covariance_of(spec: SettingSpec, sample: str, index: int) -> np.ndarray:
    """Population covariance of observation ``index`` of ``sample`` ("X" or "Y")."""
    sigma = poly_decay_cov(spec.p)
    if spec.setting in ("I", "II"):
        return 2.0 * sigma if (sample == "Y" and spec.setting == "II") else sigma
    st = _structure_for(spec)
    phi = st.phi if sample == "X" else st.phi_star
    return scaled_cov(sigma, phi[index])


def _innovations(spec, stream, rows):
    blocks = [INNOVATIONS[law](stream, (rows, k)) for law, k in innovation_layout(spec) if k > 0]
    return np.hstack(blocks)


def _transform(st: _Structure, Z, sample, rows=None):
    """Apply the covariance square roots to innovations ``Z`` (one row per observation)."""
    if st.root_x is not None:
        roots = st.root_x if sample == "X" else st.root_y
        if rows is not None:
            # every row shares one observation index; roots are symmetric
            return Z @ roots[rows[0]]
        return np.einsum("ijk,ik->ij", roots, Z)
    out = Z @ st.sqrt_sigma
    if st.d_x is not None:
        d = st.d_x if sample == "X" else st.d_y
        out *= d if rows is None else d[rows]
    elif sample == "Y":
        out *= st.y_scale
    return out


def gen_pair(spec: SettingSpec, run_seed: SeedSpec | int, mu_y=None):
    """One Monte Carlo draw of the two samples.

    ``mu_y`` overrides the mean of Y given by ``spec.mean``.

    Returns
    -------
    X : ndarray of shape (n, p)
    Y : ndarray of shape (m, p)
    """
    st = _structure_for(spec)
    stream = derive_stream(run_seed)
    X = _transform(st, _innovations(spec, stream, spec.n), "X")
    Y = _transform(st, _innovations(spec, stream, spec.m), "Y")
    Y += build_mean_vector(spec.mean) if mu_y is None else np.asarray(mu_y, dtype=float)
    return X, Y


def replicate_observation(spec: SettingSpec, sample: str, index: int, count: int, seed: SeedSpec | int):
    """``count`` independent copies of observation ``index`` of ``sample``.

    Useful to check a generator's law for one observation, which varies with
    the index in Settings III-VII.
    """
    if sample not in ("X", "Y"):
        raise ValueError("sample must be 'X' or 'Y'")
    size = spec.n if sample == "X" else spec.m
    if not 0 <= index < size:
        raise IndexError(f"index {index} out of range for {sample} of size {size}")
    st = _structure_for(spec)
    Z = _innovations(spec, derive_stream(seed), count)
    out = _transform(st, Z, sample, rows=np.full(count, index))
    if sample == "Y":
        out += build_mean_vector(spec.mean)
    return out
