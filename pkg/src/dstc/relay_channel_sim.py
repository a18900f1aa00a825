"""End-to-end simulation of the two-phase amplify-and-forward relay protocol.

Transmission model (broadcast phase, then cooperation phase):

    y_1 = sqrt(pi1 P) g0 s + w1
    r_i = sqrt(pi1 P) f_i s + v_i                      received at relay i
    t_i = sqrt(pi3 P / (pi1 P + 1)) (A_i r_i + B_i r_i*)
    y_2 = sum_i g_i t_i + sqrt(pi2 P) g0 (A0 s + B0 s*) + w2

with all noises CN(0, I) and power factors pi1 + pi2 + R*pi3 = T1 + T2 so
that P is the total average power spent per channel use. With phase-only
CSI the relays pre-compensate the phase of f_i, so the effective
source-relay gain is the Rayleigh magnitude |CN(0,1)|.

Stacked, y = sqrt(pi3 pi1 P^2 / (pi1 P + 1)) S h + W where h = (g0, g_i f_i)
and S is the dispersion matrix assembled by ``dstc_matrix``.

Decoding is exact ML on the real-stacked representation: when some relay
conjugates (B_i != 0) the forwarded noise can be improper, so second-order
statistics are kept as a real covariance of the stacked (Re, Im) vector and
the metric is covariance-weighted there. For codes whose dispersion rows
are orthonormal this collapses to the familiar scalar whitening.

Monte Carlo estimation uses counter-based RNG streams keyed by
(seed, snr index, chunk index): chunk boundaries are fixed regardless of
thread count, and error counts are integers, so results are bit-identical
under any parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .code_library import LinearDispersionCode, scaled_relay_pairs
from .constraint_checker import check_power, dispersion_matrix
from .diversity_analyzer import Constellation
from .errors import (
    ContractError,
    DimensionError,
    InsufficientDataError,
    NumericDomainError,
    ParameterError,
)
from .matrix_core import hermitian_inv_sqrt, real_operator, real_stack

_WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class PowerAllocation:
    """Power split between broadcast, source cooperation, and the relays."""

    pi1: float
    pi2: float
    pi3: float
    p: float
    t1: int
    t2: int
    n_relays: int

    def __post_init__(self):
        if min(self.pi1, self.pi2, self.pi3) < 0 or self.p <= 0:
            raise ParameterError("power factors must be nonnegative and P positive")
        total = self.pi1 + self.pi2 + self.n_relays * self.pi3
        if abs(total - (self.t1 + self.t2)) > 1e-12 * max(1.0, self.t1 + self.t2):
            raise ParameterError(
                f"power factors must satisfy pi1 + pi2 + R*pi3 = T1 + T2 "
                f"(got {total} vs {self.t1 + self.t2})"
            )

    @staticmethod
    def equal_split(code: LinearDispersionCode, p: float, pi: tuple | None = None) -> "PowerAllocation":
        """Default split: half to the broadcast phase, half shared by the relays."""
        t1, t2, r = code.K, code.T, code.N
        if pi is None:
            pi = ((t1 + t2) / 2.0, 0.0, (t1 + t2) / (2.0 * r))
        return PowerAllocation(pi[0], pi[1], pi[2], p, t1, t2, r)

    @property
    def broadcast_amp(self) -> float:
        return math.sqrt(self.pi1 * self.p)

    @property
    def relay_gain_sq(self) -> float:
        return self.pi3 * self.p / (self.pi1 * self.p + 1.0)

    @property
    def relay_gain(self) -> float:
        return math.sqrt(self.relay_gain_sq)

    @property
    def combined_scale(self) -> float:
        return self.broadcast_amp * self.relay_gain

    @property
    def source_coop_amp(self) -> float:
        return math.sqrt(self.pi2 * self.p)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the source-destination, relay-destination and source-relay gains."""

    g0: complex
    g: np.ndarray
    f: np.ndarray
    partial_csi: bool

    def __post_init__(self):
        if self.partial_csi:
            f = np.asarray(self.f)
            if np.iscomplexobj(f) or np.any(f < 0):
                raise ParameterError("phase-compensated source-relay gains must be real nonnegative")

    @property
    def n_relays(self) -> int:
        return len(self.g)

    @property
    def h(self) -> np.ndarray:
        """Effective channel vector (g0, g_1 f_1, ..., g_R f_R)."""
        return np.concatenate([[self.g0], np.asarray(self.g) * np.asarray(self.f)])


def sample_channel(n_relays: int, partial_csi: bool, rng: np.random.Generator) -> ChannelRealization:
    """Draw g0, g ~ CN(0,1); f ~ CN(0,1), or its magnitude with phase-only CSI."""
    cn = lambda *shape: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    g0 = complex(cn(1)[0])
    g = cn(n_relays)
    f = cn(n_relays)
    if partial_csi:
        f = np.abs(f)
    return ChannelRealization(g0, g, f, partial_csi)


@dataclass(frozen=True)
class ReceivedSignal:
    """Both received phases plus the second-order noise description."""

    y1: np.ndarray
    y2: np.ndarray
    h: np.ndarray
    omega: np.ndarray  # complex covariance E[n n^H] of the stacked noise
    cov_real: np.ndarray  # covariance of the stacked (Re, Im) noise vector
    transform: np.ndarray | None = None  # complex matrix already applied to y (whitening)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y1, self.y2])


# ---------------------------------------------------------------------------
# signal model
# ---------------------------------------------------------------------------


def _validate(code: LinearDispersionCode, ch: ChannelRealization, pa: PowerAllocation) -> None:
    if pa.t1 != code.K or pa.t2 != code.T or pa.n_relays != code.N:
        raise DimensionError(
            f"power allocation is for T1={pa.t1}, T2={pa.t2}, R={pa.n_relays}; "
            f"code has K={code.K}, T={code.T}, N={code.N}"
        )
    if ch.n_relays != code.N:
        raise DimensionError(f"channel has {ch.n_relays} relays, code has {code.N}")


def noise_covariance(code: LinearDispersionCode, ch: ChannelRealization, pa: PowerAllocation) -> np.ndarray:
    """Complex covariance E[W W^H] of the stacked noise.

    Broadcast block is the identity; the cooperation block is
    I + kappa * sum_i |g_i|^2 (A_i A_i^H + B_i B_i^H). The conjugating part
    of the relays can additionally make the noise improper; the pseudo
    covariance is carried by ``noise_covariance_real``.
    """
    _validate(code, ch, pa)
    t1, t2 = pa.t1, pa.t2
    omega = np.eye(t1 + t2, dtype=complex)
    coop = np.eye(t2, dtype=complex)
    for gi, pair in zip(ch.g, scaled_relay_pairs(code)):
        coop += pa.relay_gain_sq * abs(gi) ** 2 * (
            pair.a @ pair.a.conj().T + pair.b @ pair.b.conj().T
        )
    omega[t1:, t1:] = coop
    return omega


def noise_covariance_real(code: LinearDispersionCode, ch: ChannelRealization, pa: PowerAllocation) -> np.ndarray:
    """Covariance of the stacked [Re W; Im W] noise vector (exact, improper-safe)."""
    _validate(code, ch, pa)
    t1, t2 = pa.t1, pa.t2
    t = t1 + t2
    cov = np.zeros((2 * t, 2 * t))
    for j in range(t1):  # broadcast noise CN(0, I): each real part has variance 1/2
        cov[j, j] = 0.5
        cov[t + j, t + j] = 0.5
    coop = 0.5 * np.eye(2 * t2)
    jtilde = np.block(
        [[np.zeros((t2, t2)), -np.eye(t2)], [np.eye(t2), np.zeros((t2, t2))]]
    )
    for gi, pair in zip(ch.g, scaled_relay_pairs(code)):
        z = dispersion_matrix(pair)
        m = z @ z.T
        a, b = gi.real, gi.imag
        gm = a * a * m + a * b * (jtilde @ m - m @ jtilde) - b * b * (jtilde @ m @ jtilde)
        coop += 0.5 * pa.relay_gain_sq * gm
    idx = np.concatenate([np.arange(t1, t), np.arange(t + t1, 2 * t)])
    cov[np.ix_(idx, idx)] = coop
    return cov


def simulate_transmission(
    code: LinearDispersionCode,
    s: np.ndarray,
    ch: ChannelRealization,
    pa: PowerAllocation,
    rng: np.random.Generator | None = None,
    add_noise: bool = True,
    a0: np.ndarray | None = None,
    b0: np.ndarray | None = None,
) -> ReceivedSignal:
    """One pass of the two-phase protocol for a single source vector ``s``.

    Noise draws happen in the fixed order w1, v_1..v_R, w2 so a seeded
    generator reproduces the realization bit-exactly. ``add_noise=False`` is
    the zero-noise test hook.
    """
    _validate(code, ch, pa)
    s = np.asarray(s, dtype=complex)
    if s.shape != (code.K,):
        raise DimensionError(f"source vector must have length {code.K}")
    pairs = scaled_relay_pairs(code)
    for pair in pairs:
        if not check_power(pair):
            raise ContractError("relay matrix pair exceeds its power budget")
    if add_noise and rng is None:
        raise ParameterError("need a generator when noise is enabled")

    def cn(*shape):
        if not add_noise:
            return np.zeros(shape, dtype=complex)
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    w1 = cn(pa.t1)
    y1 = pa.broadcast_amp * ch.g0 * s + w1
    y2 = np.zeros(pa.t2, dtype=complex)
    for fi, gi, pair in zip(np.asarray(ch.f), ch.g, pairs):
        r_i = pa.broadcast_amp * fi * s + cn(pa.t1)
        t_i = pa.relay_gain * (pair.a @ r_i + pair.b @ r_i.conj())
        y2 = y2 + gi * t_i
    if pa.pi2 > 0 and a0 is not None:
        b0 = np.zeros_like(a0) if b0 is None else b0
        y2 = y2 + pa.source_coop_amp * ch.g0 * (a0 @ s + b0 @ s.conj())
    y2 = y2 + cn(pa.t2)
    return ReceivedSignal(
        y1=y1,
        y2=y2,
        h=ch.h,
        omega=noise_covariance(code, ch, pa),
        cov_real=noise_covariance_real(code, ch, pa),
    )


def dstc_matrix(
    code: LinearDispersionCode,
    s: np.ndarray,
    pa: PowerAllocation,
    a0: np.ndarray | None = None,
    b0: np.ndarray | None = None,
) -> np.ndarray:
    """The (T1+T2) x (R+1) dispersion matrix S with y = combined_scale * S h + W.

    Column 0 carries the broadcast phase, sqrt((pi1 P + 1)/(pi3 P)) * s on
    top and the optional source cooperation vector below; column i >= 1 is
    relay i's contribution A_i s + B_i s*.
    """
    s = np.asarray(s, dtype=complex)
    if s.shape != (code.K,):
        raise DimensionError(f"source vector must have length {code.K}")
    pairs = scaled_relay_pairs(code)
    mat = np.zeros((pa.t1 + pa.t2, code.N + 1), dtype=complex)
    mat[: pa.t1, 0] = math.sqrt((pa.pi1 * pa.p + 1.0) / (pa.pi3 * pa.p)) * s
    if pa.pi2 > 0 and a0 is not None:
        b0 = np.zeros_like(a0) if b0 is None else b0
        coeff = math.sqrt(pa.pi2 * (pa.pi1 * pa.p + 1.0) / (pa.pi3 * pa.pi1 * pa.p))
        mat[pa.t1 :, 0] = coeff * (a0 @ s + b0 @ s.conj())
    for i, pair in enumerate(pairs):
        mat[pa.t1 :, i + 1] = pair.a @ s + pair.b @ s.conj()
    return mat


def whiten(sig: ReceivedSignal) -> ReceivedSignal:
    """Premultiply the cooperation phase by the inverse square root of its covariance.

    The broadcast block is already white. The real-stacked covariance is
    transformed identically so the decoders stay exact even when the
    forwarded noise is improper.
    """
    t2 = len(sig.y2)
    t1 = len(sig.y1)
    omega2 = sig.omega[t1:, t1:]
    eig = np.linalg.eigvalsh(omega2)
    if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
        raise NumericDomainError("cooperation noise covariance is ill-conditioned")
    w2 = hermitian_inv_sqrt(omega2)
    full = np.eye(t1 + t2, dtype=complex)
    full[t1:, t1:] = w2
    tre = real_operator(full)
    prev = np.eye(t1 + t2, dtype=complex) if sig.transform is None else sig.transform
    return ReceivedSignal(
        y1=sig.y1.copy(),
        y2=w2 @ sig.y2,
        h=sig.h,
        omega=full @ sig.omega @ full.conj().T,
        cov_real=tre @ sig.cov_real @ tre.T,
        transform=full @ prev,
    )


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def codebook_symbol_vectors(
    code: LinearDispersionCode, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray, float]:
    """All source vectors of the codebook, scaled to E{s^H s} = 1.

    Returns (symbol vectors (L, K), per-symbol digits (L, K), scale).
    Codeword index is the base-M number of the digits, first symbol most
    significant.
    """
    m = constellation.size
    digits = np.stack(
        np.meshgrid(*([np.arange(m)] * code.K), indexing="ij"), axis=-1
    ).reshape(-1, code.K)
    scale = 1.0 / math.sqrt(code.K * constellation.mean_energy())
    pts = np.asarray(constellation.points)
    return scale * pts[digits], digits, scale


def quadrature_pair_values(constellation: Constellation, scale: float) -> np.ndarray:
    """Per-symbol group value table [(Re p, Im p) * scale] in point order."""
    pts = np.asarray(constellation.points)
    return np.stack([scale * pts.real, scale * pts.imag], axis=1)


def real_response_matrix(
    code: LinearDispersionCode,
    ch: ChannelRealization,
    pa: PowerAllocation,
    transform: np.ndarray | None = None,
    a0: np.ndarray | None = None,
    b0: np.ndarray | None = None,
) -> np.ndarray:
    """Real (2(T1+T2), 2K) matrix mapping real symbols to the noiseless receive vector."""
    _validate(code, ch, pa)
    pairs = scaled_relay_pairs(code)
    t1, t2 = pa.t1, pa.t2
    resp = np.zeros((t1 + t2, 2 * code.K), dtype=complex)
    plus = [pair.a + pair.b for pair in pairs]
    minus = [pair.a - pair.b for pair in pairs]
    hrel = np.asarray(ch.g) * np.asarray(ch.f)
    for m in range(code.K):
        col_i = np.zeros(t1 + t2, dtype=complex)
        col_q = np.zeros(t1 + t2, dtype=complex)
        col_i[t1 + np.arange(t2)] = pa.combined_scale * sum(
            hi * pl[:, m] for hi, pl in zip(hrel, plus)
        )
        col_q[t1 + np.arange(t2)] = pa.combined_scale * 1j * sum(
            hi * mi[:, m] for hi, mi in zip(hrel, minus)
        )
        col_i[:t1] = pa.broadcast_amp * ch.g0 * np.eye(t1)[:, m]
        col_q[:t1] = pa.broadcast_amp * ch.g0 * 1j * np.eye(t1)[:, m]
        if pa.pi2 > 0 and a0 is not None:
            b0m = np.zeros_like(a0) if b0 is None else b0
            col_i[t1:] += pa.source_coop_amp * ch.g0 * (a0 + b0m)[:, m]
            col_q[t1:] += pa.source_coop_amp * ch.g0 * 1j * (a0 - b0m)[:, m]
        resp[:, 2 * m] = col_i
        resp[:, 2 * m + 1] = col_q
    if transform is not None:
        resp = transform @ resp
    return np.vstack([resp.real, resp.imag])


def ml_decode(
    sig: ReceivedSignal,
    code: LinearDispersionCode,
    symvecs: np.ndarray,
    ch: ChannelRealization,
    pa: PowerAllocation,
) -> int:
    """Exact ML codeword index; ties break to the lowest index."""
    symvecs = np.asarray(symvecs, dtype=complex)
    if symvecs.ndim != 2 or symvecs.shape[0] == 0:
        raise ParameterError("codebook of symbol vectors must be a nonempty (L, K) array")
    mat = real_response_matrix(code, ch, pa, transform=sig.transform)
    reals = np.empty((symvecs.shape[0], 2 * code.K))
    reals[:, 0::2] = symvecs.real
    reals[:, 1::2] = symvecs.imag
    resp = reals @ mat.T
    d = real_stack(sig.y)[None, :] - resp
    weighted = np.linalg.solve(sig.cov_real, d.T).T
    metric = np.einsum("lj,lj->l", d, weighted)
    return int(np.argmin(metric))


@dataclass(frozen=True)
class GroupDecision:
    reals: np.ndarray
    group_indices: tuple[int, ...]

    def joint_index(self, sizes) -> int:
        idx = 0
        for gi, n in zip(self.group_indices, sizes):
            idx = idx * int(n) + int(gi)
        return idx


def group_ml_decode(
    sig: ReceivedSignal,
    code: LinearDispersionCode,
    groups,
    group_values,
    ch: ChannelRealization,
    pa: PowerAllocation,
    coupling_tol: float = 1e-8,
) -> GroupDecision:
    """Per-group exhaustive ML over a partition of the real symbols.

    Valid only when the whitened metric decouples across groups; the
    cross-group coupling of the quadratic form is checked and a
    ContractError reports its magnitude when it exceeds ``coupling_tol``
    (relative to the largest diagonal term).
    """
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(2 * code.K)):
        raise ParameterError("groups must partition the 2K real symbol indices")
    mat = real_response_matrix(code, ch, pa, transform=sig.transform)
    sinv_m = np.linalg.solve(sig.cov_real, mat)
    gram = mat.T @ sinv_m
    b = sinv_m.T @ real_stack(sig.y)
    mask = np.zeros_like(gram, dtype=bool)
    for g in groups:
        mask[np.ix_(list(g), list(g))] = True
    coupling = float(np.max(np.abs(gram[~mask]))) if (~mask).any() else 0.0
    scale = max(float(np.max(np.abs(np.diag(gram)))), 1e-300)
    if coupling > coupling_tol * scale:
        raise ContractError(
            f"partition is not group-decodable here: cross-group coupling {coupling:.3e} "
            f"(relative {coupling / scale:.3e})"
        )
    reals = np.zeros(2 * code.K)
    indices = []
    for g, values in zip(groups, group_values):
        v = np.asarray(values, dtype=float)
        gg = gram[np.ix_(list(g), list(g))]
        quad = np.einsum("vi,ij,vj->v", v, gg, v) - 2.0 * v @ b[list(g)]
        best = int(np.argmin(quad))
        indices.append(best)
        reals[list(g)] = v[best]
    return GroupDecision(reals, tuple(indices))


# ---------------------------------------------------------------------------
# Monte Carlo error-rate estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment: code, constellation, SNR grid, budget, seed."""

    code: LinearDispersionCode
    constellation: Constellation
    snr_db: tuple[float, ...]
    trials: tuple[int, ...]
    seed: int
    pi: tuple[float, float, float] | None = None
    partial_csi: bool = True
    chunk: int = 65536
    threads: int = 1

    def __post_init__(self):
        if len(self.trials) == 1 and len(self.snr_db) > 1:
            object.__setattr__(self, "trials", tuple(self.trials) * len(self.snr_db))
        if len(self.trials) != len(self.snr_db):
            raise ParameterError("need one trial count per SNR point")
        if self.chunk < 1 or self.threads < 1:
            raise ParameterError("chunk size and thread count must be positive")


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    trials: int
    cw_errors: int
    bit_errors: int
    n_bits: int
    cer: float
    ber: float
    ci_low: float
    ci_high: float


def wilson_interval(k: int, n: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return (lo, hi)


class _Kernel:
    """Vectorized per-chunk simulator + exact ML decoder for one code/constellation."""

    def __init__(self, cfg: SimConfig):
        code, con = cfg.code, cfg.constellation
        self.cfg = cfg
        pairs = scaled_relay_pairs(code)
        self.a = np.stack([p.a for p in pairs])  # (R, T2, T1)
        self.b = np.stack([p.b for p in pairs])
        self.r, self.t2, self.t1 = self.a.shape
        self.a_flat = self.a.transpose(1, 0, 2).reshape(self.t2, -1)  # (T2, R*T1)
        self.b_flat = self.b.transpose(1, 0, 2).reshape(self.t2, -1)
        self.sym, self.digits, self.scale = codebook_symbol_vectors(code, con)
        self.L = self.sym.shape[0]
        self.bits_per_symbol = con.bits_per_symbol
        gray = np.arange(con.size) ^ (np.arange(con.size) >> 1)
        self.bitdist = np.array(
            [[bin(int(ga) ^ int(gb)).count("1") for gb in gray] for ga in gray], dtype=np.int64
        )
        # relay columns per codeword, and conjugate-separated parts for complex f
        self.cols_a = np.einsum("rts,ls->ltr", self.a, self.sym)
        self.cols_b = np.einsum("rts,ls->ltr", self.b, np.conj(self.sym))
        cols = self.cols_a + self.cols_b
        self.cols = cols
        self.energy1 = np.sum(np.abs(self.sym) ** 2, axis=1).real  # (L,)
        self.gram_rel = np.einsum("lta,ltb->lab", np.conj(cols), cols)  # (L, R, R)
        # per-codeword features of the single-gemm scalar-path metric
        colsflat = cols.reshape(self.L, -1)
        gramflat = self.gram_rel.reshape(self.L, -1)
        self.features = np.hstack(
            [
                self.energy1[:, None],
                self.sym.real,
                self.sym.imag,
                colsflat.real,
                colsflat.imag,
                gramflat.real,
                gramflat.imag,
            ]
        ).T.copy()  # (D, L)
        # dispersion Gram diagnostics decide the whitening path
        zz = np.stack([dispersion_matrix(p) @ dispersion_matrix(p).T for p in pairs])
        off = np.array([np.max(np.abs(m - np.diag(np.diag(m)))) for m in zz])
        self.zz = zz
        diag = np.stack([np.diag(m) for m in zz])  # (R, 2T2)
        self.d_re = diag[:, : self.t2]
        self.d_im = diag[:, self.t2 :]
        if np.max(off) <= 1e-12 and np.max(np.abs(diag - diag[:, :1])) <= 1e-12:
            self.noise_path = "scalar"
            self.zz_scalar = diag[:, 0]  # (R,)
        elif np.max(off) <= 1e-12 and np.max(np.abs(self.d_re - self.d_im)) <= 1e-12:
            self.noise_path = "diagonal"
        else:
            self.noise_path = "general"
            t2 = self.t2
            jt = np.block([[np.zeros((t2, t2)), -np.eye(t2)], [np.eye(t2), np.zeros((t2, t2))]])
            self.gen_m = zz
            self.gen_k = np.stack([jt @ m - m @ jt for m in zz])
            self.gen_l = np.stack([-(jt @ m @ jt) for m in zz])

    def simulate_batch(self, pa: PowerAllocation, rng: np.random.Generator, n: int):
        """Draw one batch of trials; fixed draw order (idx, then one normal block)."""
        idx = rng.integers(0, self.L, n)
        width = 1 + 2 * self.r + self.t1 + self.r * self.t1 + self.t2
        block = rng.standard_normal((n, 2 * width)).view(np.complex128)
        block *= 1.0 / np.sqrt(2)
        pos = 0

        def take(cols):
            nonlocal pos
            out = block[:, pos : pos + cols]
            pos += cols
            return out

        g0 = take(1)[:, 0]
        g = take(self.r)
        f = take(self.r)
        if self.cfg.partial_csi:
            f = np.abs(f)
        w1 = take(self.t1)
        v = take(self.r * self.t1).reshape(n, self.r, self.t1)
        w2 = take(self.t2)

        c1 = pa.broadcast_amp
        rg = pa.relay_gain
        y1 = c1 * g0[:, None] * self.sym[idx] + w1
        # sum_r g_r (A_r v_r + B_r v_r*) as two gemms over the (r, s) axes
        gv = (g[:, :, None] * v).reshape(n, -1)
        gvc = (g[:, :, None] * np.conj(v)).reshape(n, -1)
        noise2 = gv @ self.a_flat.T + gvc @ self.b_flat.T
        if self.cfg.partial_csi:
            # real f: A_i s f + B_i s* f = f (A_i s + B_i s*)
            sig2 = c1 * np.einsum("br,btr->bt", g * f, self.cols[idx])
        else:
            sig2 = c1 * (
                np.einsum("br,btr->bt", g * f, self.cols_a[idx])
                + np.einsum("br,btr->bt", g * np.conj(f), self.cols_b[idx])
            )
        y2 = rg * (sig2 + noise2) + w2
        return idx, g0, g, f, y1, y2

    def decode_batch(self, pa: PowerAllocation, g0, g, f, y1, y2) -> np.ndarray:
        """Exact ML decisions for a batch, whitened per the code's noise structure."""
        n = len(g0)
        c1 = pa.broadcast_amp
        rg = pa.relay_gain
        kap = pa.relay_gain_sq
        # decoder believes the effective-channel model h = (g0, g_i f_i)
        hh = g * f
        c2 = c1 * rg
        if self.noise_path == "scalar":
            # whole metric (constants dropped) as one real gemm against the
            # per-codeword feature table: 2||r1||^2 - 4 Re<y1,r1>
            # + (2/w)||r2||^2 - (4/w) Re<y2,r2>
            omega = 1.0 + kap * (np.abs(g) ** 2 @ self.zz_scalar)
            a1 = np.conj(g0)[:, None] * y1
            z = (np.conj(hh)[:, None, :] * y2[:, :, None]).reshape(n, -1)
            outer = (np.conj(hh)[:, :, None] * hh[:, None, :]).reshape(n, -1)
            winv = 1.0 / omega
            phi = np.empty((n, self.features.shape[0]))
            pos = 0
            for part, coeff in (
                ((np.abs(g0) ** 2)[:, None], 2.0 * c1 * c1),
                (a1.real, -4.0 * c1),
                (a1.imag, -4.0 * c1),
                (z.real, (-4.0 * c2) * winv[:, None]),
                (z.imag, (-4.0 * c2) * winv[:, None]),
                (outer.real, (2.0 * c2 * c2) * winv[:, None]),
                (outer.imag, (-2.0 * c2 * c2) * winv[:, None]),
            ):
                width = part.shape[1]
                np.multiply(part, coeff, out=phi[:, pos : pos + width])
                pos += width
            return np.argmin(phi @ self.features, axis=1)
        cross1 = (c1 * np.conj(g0))[:, None] * (y1 @ np.conj(self.sym).T)
        m1 = 2.0 * (c1 * c1 * np.abs(g0)[:, None] ** 2 * self.energy1[None, :] - 2.0 * cross1.real)
        resp2 = c2 * np.einsum("br,ltr->blt", hh, self.cols)
        diff = y2[:, None, :] - resp2
        if self.noise_path == "diagonal":
            denom = 1.0 + kap * np.einsum("br,rt->bt", np.abs(g) ** 2, self.d_re)
            m2 = 2.0 * np.sum(np.abs(diff) ** 2 / denom[:, None, :], axis=2)
        else:
            ga, gb = g.real, g.imag
            coeff = np.stack([ga * ga, ga * gb, gb * gb], axis=2)  # (n, R, 3)
            mats = np.stack([self.gen_m, self.gen_k, self.gen_l], axis=1)  # (R, 3, d, d)
            cov = 0.5 * np.eye(2 * self.t2) + 0.5 * kap * np.tensordot(
                coeff, mats, axes=([1, 2], [0, 1])
            )
            w, vec = np.linalg.eigh(cov)
            white = vec * (1.0 / np.sqrt(w))[:, None, :]  # (n, d, d): rows V diag(1/sqrt)
            dreal = np.concatenate([diff.real, diff.imag], axis=2)  # (n, L, d)
            e = np.einsum("bdk,bld->blk", white, dreal)
            m2 = np.einsum("blk,blk->bl", e, e)
        return np.argmin(m1 + m2, axis=1)

    def run_chunk(self, pa: PowerAllocation, snr_idx: int, chunk_idx: int, n: int):
        rng = np.random.Generator(
            np.random.Philox(
                key=np.array([self.cfg.seed, (snr_idx << 32) + chunk_idx], dtype=np.uint64)
            )
        )
        idx, g0, g, f, y1, y2 = self.simulate_batch(pa, rng, n)
        dec = self.decode_batch(pa, g0, g, f, y1, y2)
        cw = int(np.sum(dec != idx))
        bits = int(self.bitdist[self.digits[idx], self.digits[dec]].sum())
        return cw, bits


def monte_carlo_ber(cfg: SimConfig) -> list[BerPoint]:
    """Per-SNR codeword/bit error estimates, deterministic given the seed.

    Trials are processed in fixed-size chunks with independent counter-based
    RNG streams; results are identical for any thread count.
    """
    kernel = _Kernel(cfg)
    points = []
    for snr_idx, (snr, trials) in enumerate(zip(cfg.snr_db, cfg.trials)):
        pa = PowerAllocation.equal_split(cfg.code, 10.0 ** (snr / 10.0), cfg.pi)
        nchunks = (trials + cfg.chunk - 1) // cfg.chunk
        sizes = [min(cfg.chunk, trials - ci * cfg.chunk) for ci in range(nchunks)]

        def job(ci):
            return kernel.run_chunk(pa, snr_idx, ci, sizes[ci])

        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(job, range(nchunks)))
        else:
            results = [job(ci) for ci in range(nchunks)]
        cw = sum(r[0] for r in results)
        bits = sum(r[1] for r in results)
        n_bits = trials * cfg.code.K * kernel.bits_per_symbol
        lo, hi = wilson_interval(bits, n_bits)
        points.append(
            BerPoint(
                snr_db=snr,
                trials=trials,
                cw_errors=cw,
                bit_errors=bits,
                n_bits=n_bits,
                cer=cw / trials,
                ber=bits / n_bits,
                ci_low=lo,
                ci_high=hi,
            )
        )
    return points


def estimate_diversity(points, window_db: tuple[float, float]) -> float:
    """Least-squares slope of log10(BER) against log10(P) inside the window.

    Raises InsufficientDataError when fewer than two points fall in the
    window or any of them has a zero error estimate.
    """
    lo, hi = window_db
    sel = [p for p in points if lo - 1e-9 <= p.snr_db <= hi + 1e-9]
    if len(sel) < 2:
        raise InsufficientDataError("need at least two SNR points in the window")
    if any(p.ber <= 0 for p in sel):
        raise InsufficientDataError("zero error estimate inside the fit window")
    x = np.array([p.snr_db / 10.0 for p in sel])
    y = np.log10([p.ber for p in sel])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)
