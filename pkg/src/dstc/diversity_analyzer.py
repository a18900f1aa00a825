"""Rank and determinant criteria over finite codebooks, plus lattice rotations.

The diversity order of a space-time code over a finite constellation is
governed by the minimum rank of codeword differences, and the coding gain by
the minimum difference determinant. Both are evaluated exhaustively here.
For block-diagonal designs whose symbols are jointly precoded in groups, a
difference scan restricted to single-group differences is provided: by
linearity a codeword difference is the sum of independent per-group
contributions, so for these designs every rank-drop pattern is already
realized by some single-group difference.

``optimize_rotation`` searches orthogonal matrices maximizing the minimum
product distance of the rotated integer-difference set, mixing known
algebraic candidates (half-angle arctan(2) rotation, DCT-IV) with a seeded
random search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .code_library import LinearDispersionCode
from .errors import EnumerationBudgetError, ParameterError
from .matrix_core import RANK_TOL

ENUM_BUDGET = 2**20
PAIR_SCAN_BUDGET = 2**12


@dataclass(frozen=True)
class Constellation:
    """A finite complex symbol alphabet."""

    name: str
    points: tuple[complex, ...]

    def __post_init__(self):
        if not self.points:
            raise ParameterError("constellation must be nonempty")
        if len(set(self.points)) != len(self.points):
            raise ParameterError("constellation points must be distinct")

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        n = self.size
        if n & (n - 1):
            raise ParameterError("bit labeling requires a power-of-two constellation")
        return n.bit_length() - 1

    def mean_energy(self) -> float:
        return float(np.mean(np.abs(np.asarray(self.points)) ** 2))

    def normalized(self) -> "Constellation":
        scale = 1.0 / np.sqrt(self.mean_energy())
        return Constellation(self.name, tuple(complex(p * scale) for p in self.points))

    @staticmethod
    def bpsk() -> "Constellation":
        return Constellation("bpsk", (1 + 0j, -1 + 0j))

    @staticmethod
    def qpsk() -> "Constellation":
        s = 1 / np.sqrt(2)
        return Constellation("qpsk", (s * (1 + 1j), s * (-1 + 1j), s * (-1 - 1j), s * (1 - 1j)))

    @staticmethod
    def qam16() -> "Constellation":
        levels = (-3, -1, 1, 3)
        pts = tuple((a + 1j * b) / np.sqrt(10) for a in levels for b in levels)
        return Constellation("qam16", pts)


_CONSTELLATIONS = {
    "bpsk": Constellation.bpsk,
    "qpsk": Constellation.qpsk,
    "qam16": Constellation.qam16,
}


def constellation_by_name(name: str) -> Constellation:
    try:
        return _CONSTELLATIONS[name.lower()]()
    except KeyError:
        raise ParameterError(f"unknown constellation {name!r}; known: {sorted(_CONSTELLATIONS)}")


@dataclass(frozen=True)
class PrecodingSpec:
    """An orthogonal rotation applied jointly to disjoint groups of real symbols."""

    rotation: np.ndarray
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ParameterError("rotation must be square")
        if np.max(np.abs(r.T @ r - np.eye(r.shape[0]))) > 1e-10:
            raise ParameterError("rotation must be orthogonal")
        lam = r.shape[0]
        seen = sorted(i for g in self.groups for i in g)
        if any(len(g) != lam for g in self.groups):
            raise ParameterError("every group must match the rotation size")
        if seen != list(range(len(seen))):
            raise ParameterError("groups must partition the real symbol indices exactly")

    @property
    def lam(self) -> int:
        return int(np.asarray(self.rotation).shape[0])

    @staticmethod
    def quadrature_pairs(k: int, rotation) -> "PrecodingSpec":
        """One group per complex symbol: (x_kI, x_kQ)."""
        return PrecodingSpec(np.asarray(rotation, float), tuple((2 * m, 2 * m + 1) for m in range(k)))

    @staticmethod
    def cross_block_quadruples(k: int, rotation) -> "PrecodingSpec":
        """Groups (x_iI, x_iQ, x_(i+k/2)I, x_(i+k/2)Q) pairing the two halves.

        For a design made of two diagonal blocks in symbols 1..k/2 and
        k/2+1..k, each group takes one quadrature pair from each block,
        which preserves per-group decodability of the block structure.
        """
        if k % 2:
            raise ParameterError("cross-block grouping needs an even symbol count")
        half = k // 2
        groups = tuple(
            (2 * i, 2 * i + 1, 2 * (i + half), 2 * (i + half) + 1) for i in range(half)
        )
        return PrecodingSpec(np.asarray(rotation, float), groups)


# ---------------------------------------------------------------------------
# codebook enumeration
# ---------------------------------------------------------------------------


def _digit_grid(base: int, length: int) -> np.ndarray:
    """All base^length digit tuples, most significant digit first."""
    grids = np.meshgrid(*([np.arange(base)] * length), indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, length)


def enumerate_codebook(
    code: LinearDispersionCode,
    constellation: Constellation,
    budget: int = ENUM_BUDGET,
) -> np.ndarray:
    """All |constellation|^K codewords as an (L, T, N) array, deterministic order."""
    size = constellation.size**code.K
    if size > budget:
        raise EnumerationBudgetError(
            f"{constellation.size}^{code.K} = {size} codewords exceeds the budget {budget}"
        )
    digits = _digit_grid(constellation.size, code.K)
    pts = np.asarray(constellation.points)
    symbols = pts[digits]  # (L, K)
    reals = np.empty((size, 2 * code.K))
    reals[:, 0::2] = symbols.real
    reals[:, 1::2] = symbols.imag
    return np.einsum("lk,ktn->ltn", reals, code.real_weights())


@dataclass(frozen=True)
class PrecodedCodebook:
    """Exhaustive codebook of a jointly precoded design."""

    codewords: np.ndarray  # (L, T, N)
    reals: np.ndarray  # (L, 2K)
    group_values: tuple[np.ndarray, ...]  # per group, (n_g, lam) rotated tuples
    spec: PrecodingSpec


def apply_precoding(
    code: LinearDispersionCode,
    spec: PrecodingSpec,
    per_dim_alphabet=(-1.0, 1.0),
    budget: int = ENUM_BUDGET,
) -> PrecodedCodebook:
    """Enumerate the codebook where each group's reals are R times a PAM tuple.

    Group g of real-symbol indices takes the values rotation @ u over all
    tuples u from the per-dimension alphabet; groups vary independently.
    Codeword index is the mixed-radix number of the per-group value indices,
    first group most significant.
    """
    if len(spec.groups) * spec.lam != 2 * code.K:
        raise ParameterError("groups must cover exactly the 2K real symbols of the code")
    alphabet = np.asarray(per_dim_alphabet, dtype=float)
    values = np.asarray(list(itertools.product(alphabet, repeat=spec.lam)))
    rotated = values @ np.asarray(spec.rotation, float).T  # (n_g, lam)
    n_g = rotated.shape[0]
    total = n_g ** len(spec.groups)
    if total > budget:
        raise EnumerationBudgetError(f"{n_g}^{len(spec.groups)} = {total} codewords exceeds the budget {budget}")
    digits = _digit_grid(n_g, len(spec.groups))
    reals = np.empty((total, 2 * code.K))
    for gi, group in enumerate(spec.groups):
        reals[:, list(group)] = rotated[digits[:, gi]]
    codewords = np.einsum("lk,ktn->ltn", reals, code.real_weights())
    return PrecodedCodebook(codewords, reals, tuple(rotated for _ in spec.groups), spec)


# ---------------------------------------------------------------------------
# pairwise difference criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodebookAnalysis:
    n_codewords: int
    min_rank: int
    min_det: float
    full_rank: bool
    worst_pair: tuple[int, int]


def analyze_codebook(codebook, tol: float = RANK_TOL, budget: int = PAIR_SCAN_BUDGET) -> CodebookAnalysis:
    """Exhaustive O(L^2) scan of ranks and determinants of codeword differences.

    The determinant criterion is |det(dS)|^2 for square differences and
    |det(dS^H dS)| otherwise. ``worst_pair`` is the first pair attaining the
    minimum determinant.
    """
    cb = np.asarray(codebook, dtype=complex)
    if cb.ndim != 3:
        raise ParameterError("codebook must be an (L, T, N) array")
    L, T, N = cb.shape
    if L < 2:
        raise ParameterError("need at least two codewords")
    if L > budget:
        raise EnumerationBudgetError(
            f"full pair scan waived above {budget} codewords (got {L}); "
            "use the per-group difference scan for precoded block designs"
        )
    full = min(T, N)
    min_rank = full
    min_det = np.inf
    worst = (0, 1)
    for i in range(L - 1):
        diffs = cb[i + 1 :] - cb[i]
        s = np.linalg.svd(diffs, compute_uv=False)
        ranks = (s > tol * np.maximum(s[:, :1], 1e-300)).sum(axis=1)
        ranks[s[:, 0] == 0.0] = 0
        if T == N:
            dets = np.abs(np.linalg.det(diffs)) ** 2
        else:
            grams = np.einsum("lta,ltb->lab", diffs.conj(), diffs)
            dets = np.abs(np.linalg.det(grams))
        j = int(np.argmin(dets))
        if dets[j] < min_det:
            min_det, worst = float(dets[j]), (i, i + 1 + j)
        min_rank = min(min_rank, int(ranks.min()))
    full_rank = min_rank == full
    if not full_rank:
        min_det = 0.0
    return CodebookAnalysis(L, min_rank, min_det, full_rank, worst)


def min_rank_over_differences(codebook, tol: float = RANK_TOL, budget: int = PAIR_SCAN_BUDGET) -> int:
    """Minimum rank of S_i - S_j over distinct pairs.

    Prunes by deduplicating difference matrices (differences of a linear
    design repeat heavily across pairs); the naive O(L^2) loop is the
    reference oracle in the test suite.
    """
    cb = np.asarray(codebook, dtype=complex)
    if cb.ndim != 3:
        raise ParameterError("codebook must be an (L, T, N) array")
    L, T, N = cb.shape
    if L < 2:
        raise ParameterError("need at least two codewords")
    if L > budget:
        raise EnumerationBudgetError(
            f"full pair scan waived above {budget} codewords (got {L}); "
            "use the per-group difference scan for precoded block designs"
        )
    seen: set[bytes] = set()
    min_rank = min(T, N)
    for i in range(L - 1):
        diffs = cb[i + 1 :] - cb[i]
        keys = np.round(diffs, 9)
        fresh = []
        for d, key in zip(diffs, keys):
            kb = key.tobytes()
            if kb not in seen:
                seen.add(kb)
                fresh.append(d)
        if not fresh:
            continue
        stack = np.stack(fresh)
        s = np.linalg.svd(stack, compute_uv=False)
        ranks = (s > tol * np.maximum(s[:, :1], 1e-300)).sum(axis=1)
        ranks[s[:, 0] == 0.0] = 0
        min_rank = min(min_rank, int(ranks.min()))
    return min_rank


def min_det_over_differences(codebook, tol: float = RANK_TOL) -> tuple[float, bool]:
    """Minimum difference determinant and a full-rank flag.

    Returns (0.0, False) when some difference is rank deficient, otherwise
    (min |det| criterion, True).
    """
    res = analyze_codebook(codebook, tol=tol)
    return res.min_det, res.full_rank


def min_rank_group_differences(
    code: LinearDispersionCode,
    spec: PrecodingSpec,
    per_dim_alphabet=(-1.0, 1.0),
    tol: float = RANK_TOL,
) -> int:
    """Minimum difference rank over differences confined to one precoding group.

    Codeword differences decompose per group by linearity; for block-diagonal
    designs precoded with one real pair per block and group (where a block's
    singularity depends componentwise on its per-group difference entries)
    the single-group differences already realize every rank-drop pattern, so
    this scan is exhaustive for them.
    """
    alphabet = np.asarray(per_dim_alphabet, dtype=float)
    tuples = np.asarray(list(itertools.product(alphabet, repeat=spec.lam)))
    rotated = tuples @ np.asarray(spec.rotation, float).T
    diffs = rotated[:, None, :] - rotated[None, :, :]
    diffs = diffs.reshape(-1, spec.lam)
    diffs = np.unique(np.round(diffs, 12), axis=0)
    diffs = diffs[np.any(diffs != 0.0, axis=1)]
    weights = code.real_weights()
    min_rank = min(code.T, code.N)
    for group in spec.groups:
        mats = np.einsum("dk,ktn->dtn", diffs, weights[list(group)])
        s = np.linalg.svd(mats, compute_uv=False)
        ranks = (s > tol * np.maximum(s[:, :1], 1e-300)).sum(axis=1)
        ranks[s[:, 0] == 0.0] = 0
        min_rank = min(min_rank, int(ranks.min()))
    return min_rank


# ---------------------------------------------------------------------------
# rotation search
# ---------------------------------------------------------------------------


def _rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def dct_iv(n: int) -> np.ndarray:
    """Orthogonal DCT-IV matrix, a classical algebraic lattice rotation."""
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.sqrt(2.0 / n) * np.cos(np.pi * (2 * j + 1) * (2 * k + 1) / (4 * n))


def _algebraic_candidates(lam: int) -> list[np.ndarray]:
    if lam == 2:
        return [_rotation_2d(0.5 * np.arctan(2.0)), dct_iv(2)]
    half = _rotation_2d(0.5 * np.arctan(2.0))
    return [
        dct_iv(4),
        np.kron(half, half),
        np.kron(half, _rotation_2d(np.pi / 8)),
    ]


def nonzero_differences(per_dim_alphabet, lam: int) -> np.ndarray:
    """All distinct nonzero difference vectors of the per-dimension alphabet."""
    a = np.asarray(per_dim_alphabet, dtype=float)
    d1 = np.unique(np.round(a[:, None] - a[None, :], 12))
    diffs = np.asarray(list(itertools.product(d1, repeat=lam)))
    return diffs[np.any(diffs != 0.0, axis=1)]


def min_product_distance(rotation, diffs) -> float:
    """min over difference vectors d of prod_j |(R d)_j|."""
    rotated = np.asarray(diffs) @ np.asarray(rotation, float).T
    return float(np.min(np.prod(np.abs(rotated), axis=1)))


def optimize_rotation(
    lam: int,
    trials: int = 200,
    seed: int = 0,
    per_dim_alphabet=(-1.0, 1.0),
) -> np.ndarray:
    """Orthogonal rotation maximizing the minimum product distance.

    Evaluates known algebraic candidates plus ``trials`` seeded random
    orthogonal matrices over the exhaustive difference set of the
    per-dimension alphabet; deterministic given the seed.
    """
    if lam not in (2, 4):
        raise ParameterError(f"rotation search supports group sizes 2 and 4, got {lam}")
    diffs = nonzero_differences(per_dim_alphabet, lam)
    rng = np.random.default_rng(seed)
    best, best_val = None, -1.0
    candidates = _algebraic_candidates(lam)
    for _ in range(trials):
        q, r = np.linalg.qr(rng.standard_normal((lam, lam)))
        candidates.append(q * np.sign(np.diag(r)))
    for cand in candidates:
        val = min_product_distance(cand, diffs)
        if val > best_val:
            best, best_val = cand, val
    return best
