"""Counter-based random number generation.

Every random draw in the package is a pure function of
(seed, role label, particle id, step index, lane), so simulations are
bit-reproducible regardless of evaluation order or worker count, and
Picard iterates / coupled runs can replay identical Brownian increments
without storing them.

The generator is a SplitMix64 mix of the packed counter, mapped to
standard normals through Box-Muller. Statistical quality is more than
adequate for Monte Carlo; the point is determinism and random access.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Finalizing mixer of SplitMix64, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):  # modular uint64 arithmetic is intended
        z = (x + _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, label: str) -> int:
    """Derive a 64-bit sub-seed from a master seed and a role label.

    Uses SHA-256 of ``"{seed}:{label}"`` truncated to 64 bits, so sub-streams
    for different roles (initial sampling, dynamics noise, ...) never collide.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _counters(seed: int, ids: np.ndarray, step: int, lanes: int) -> np.ndarray:
    """Pack (seed, particle id, step, lane) into distinct uint64 counters."""
    with np.errstate(over="ignore"):
        base = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(0))
        pid = _splitmix64(ids.astype(np.uint64) * _MIX1 + base)
        stepped = _splitmix64(pid ^ (np.uint64(step) * _MIX2))
        lane = np.arange(lanes, dtype=np.uint64) * _GOLDEN
        return stepped[:, None] + lane[None, :]


def uniforms(seed: int, ids: np.ndarray, step: int, lanes: int) -> np.ndarray:
    """Deterministic uniforms in (0, 1), shape (len(ids), lanes)."""
    bits = _splitmix64(_counters(seed, ids, step, lanes))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53


def normals(seed: int, ids: np.ndarray, step: int, dim: int) -> np.ndarray:
    """Deterministic standard normals, shape (len(ids), dim).

    Box-Muller on counter-derived uniforms; one normal consumes two lanes
    so neighbouring draws never share bits.
    """
    u = uniforms(seed, ids, step, 2 * dim)
    r = np.sqrt(-2.0 * np.log(u[:, :dim]))
    return r * np.cos(2.0 * np.pi * u[:, dim:])
