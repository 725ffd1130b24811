"""System parameters, channel generation, and eigenmode extraction.

All powers are linear milliwatts internally; dBm appears only at the I/O
boundary (config files, CSV columns).  Channel draws are reproducible: a
given seed always yields the same matrices, entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dbm_to_mw(x_dbm: float) -> float:
    """Convert a power level in dBm to linear milliwatts."""
    if not np.isfinite(x_dbm):
        raise ValueError(f"power in dBm must be finite, got {x_dbm!r}")
    return float(10.0 ** (x_dbm / 10.0))


@dataclass(frozen=True)
class SystemParams:
    """Transmit power, noise levels, conversion efficiency and antenna counts.

    p_source, sigma1_sq and sigma2_sq are linear mW; eta is the fraction of
    harvested RF power usable for relay transmission; d_streams is the
    number of spatial streams, at most min(m_src, l_relay, n_dst).
    """

    p_source: float
    sigma1_sq: float
    sigma2_sq: float
    eta: float
    m_src: int = 4
    l_relay: int = 4
    n_dst: int = 4
    d_streams: int = 4

    def __post_init__(self):
        if self.p_source <= 0 or self.sigma1_sq <= 0 or self.sigma2_sq <= 0:
            raise ValueError("p_source, sigma1_sq and sigma2_sq must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if min(self.m_src, self.l_relay, self.n_dst) < 1:
            raise ValueError("antenna counts must be >= 1")
        if not 1 <= self.d_streams <= min(self.m_src, self.l_relay, self.n_dst):
            raise ValueError("d_streams must satisfy 1 <= D <= min(M, L, N)")


@dataclass(frozen=True)
class SnrPair:
    """Per-stream SNR factors: rho1 at the relay, rho2 at the destination."""

    rho1: float
    rho2: float


def snr_pair(params: SystemParams) -> SnrPair:
    d = params.d_streams
    return SnrPair(rho1=params.p_source / (d * params.sigma1_sq),
                   rho2=params.p_source / (d * params.sigma2_sq))


@dataclass(frozen=True, eq=False)
class ChannelPair:
    """First-hop matrix h1 (relay x source) and second-hop h2 (destination x relay)."""

    h1: np.ndarray
    h2: np.ndarray

    def __post_init__(self):
        for name, h in (("h1", self.h1), ("h2", self.h2)):
            if not isinstance(h, np.ndarray) or h.ndim != 2:
                raise ValueError(f"{name} must be a 2-D array")
            if not np.all(np.isfinite(h)):
                raise ValueError(f"{name} contains non-finite entries")
        if self.h2.shape[1] != self.h1.shape[0]:
            raise ValueError(
                f"relay dimension mismatch: h1 is {self.h1.shape}, h2 is {self.h2.shape}")

    def check_dims(self, params: SystemParams) -> None:
        expect1 = (params.l_relay, params.m_src)
        expect2 = (params.n_dst, params.l_relay)
        if self.h1.shape != expect1 or self.h2.shape != expect2:
            raise ValueError(
                f"channel dimensions {self.h1.shape}/{self.h2.shape} do not match "
                f"antenna configuration {expect1}/{expect2}")


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """SVD factors of both hops plus the squared singular values of the
    d strongest modes (alpha for hop 1, beta for hop 2), sorted descending.

    sigma1_diag / sigma2_diag hold the full singular-value vectors so that
    trace identities can be checked over all modes, not just the kept ones.
    """

    alpha: np.ndarray
    beta: np.ndarray
    u1: np.ndarray
    v1: np.ndarray
    u2: np.ndarray
    v2: np.ndarray
    sigma1_diag: np.ndarray
    sigma2_diag: np.ndarray

    @property
    def d(self) -> int:
        return len(self.alpha)


def generate_channel_pair(seed: int, params: SystemParams, entry_variance: float,
                          rician_k: float | None = None) -> ChannelPair:
    """Draw both hop matrices with i.i.d. zero-mean circularly-symmetric
    complex Gaussian entries of the given per-entry variance (linear mW).

    ``rician_k`` switches on a deterministic line-of-sight component with
    the given K-factor; the per-entry second moment stays ``entry_variance``.
    Draws are deterministic for a given seed (PCG64 stream, h1 drawn first).
    """
    if entry_variance <= 0:
        raise ValueError("entry_variance must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    if rician_k is None:
        scatter_var, los = entry_variance, 0.0
    else:
        if rician_k < 0:
            raise ValueError("rician_k must be nonnegative")
        scatter_var = entry_variance / (rician_k + 1.0)
        los = np.sqrt(entry_variance * rician_k / (rician_k + 1.0))

    def draw(rows, cols):
        re = rng.standard_normal((rows, cols))
        im = rng.standard_normal((rows, cols))
        return los + np.sqrt(scatter_var / 2.0) * (re + 1j * im)

    h1 = draw(params.l_relay, params.m_src)
    h2 = draw(params.n_dst, params.l_relay)
    return ChannelPair(h1=h1, h2=h2)


def decompose(ch: ChannelPair, d: int) -> EigenSystem:
    """SVD both hops and keep the d strongest eigenmodes of each.

    alpha[k] and beta[k] are the squared singular values, descending; modes
    beyond a channel's rank come out as zeros and are later eliminated by
    the positive-part water-filling operator.
    """
    for name, h in (("h1", ch.h1), ("h2", ch.h2)):
        if not np.all(np.isfinite(h)):
            raise ValueError(f"{name} contains non-finite entries")
    max_d = min(ch.h1.shape + ch.h2.shape)
    if not 1 <= d <= max_d:
        raise ValueError(f"d={d} exceeds the channel dimensions (max {max_d})")
    u1, s1, v1h = np.linalg.svd(ch.h1)
    u2, s2, v2h = np.linalg.svd(ch.h2)
    return EigenSystem(
        alpha=s1[:d] ** 2,
        beta=s2[:d] ** 2,
        u1=u1, v1=v1h.conj().T,
        u2=u2, v2=v2h.conj().T,
        sigma1_diag=s1, sigma2_diag=s2,
    )


def load_channel_file(path: str) -> ChannelPair:
    """Read two matrices from a plain-text file.

    Each block starts with a header line ``rows cols`` followed by ``rows``
    lines of whitespace-separated ``re:im`` entries; the first block is h1,
    the second h2.  Blank lines between blocks are ignored.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            ln = lines[pos].strip()
            pos += 1
            if ln:
                return pos, ln
        return pos, None

    def read_matrix(which):
        lineno, header = next_line()
        if header is None:
            raise ValueError(f"{path}: unexpected end of file while reading {which} header")
        parts = header.split()
        if len(parts) != 2:
            raise ValueError(f"{path}, line {lineno}: expected 'rows cols', got {header!r}")
        try:
            rows, cols = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}, line {lineno}: non-integer dimensions {header!r}") from None
        if rows < 1 or cols < 1:
            raise ValueError(f"{path}, line {lineno}: dimensions must be positive")
        mat = np.empty((rows, cols), dtype=complex)
        for r in range(rows):
            lineno, row = next_line()
            if row is None:
                raise ValueError(f"{path}: unexpected end of file in {which}, row {r + 1}")
            entries = row.split()
            if len(entries) != cols:
                raise ValueError(
                    f"{path}, line {lineno}: expected {cols} entries, got {len(entries)}")
            for c, tok in enumerate(entries):
                re_s, sep, im_s = tok.partition(":")
                if not sep:
                    raise ValueError(
                        f"{path}, line {lineno}: entry {tok!r} is not of the form re:im")
                try:
                    mat[r, c] = complex(float(re_s), float(im_s))
                except ValueError:
                    raise ValueError(
                        f"{path}, line {lineno}: cannot parse entry {tok!r}") from None
        return mat

    h1 = read_matrix("h1")
    h2 = read_matrix("h2")
    _, leftover = next_line()
    if leftover is not None:
        raise ValueError(f"{path}: trailing content after the second matrix block")
    return ChannelPair(h1=h1, h2=h2)
