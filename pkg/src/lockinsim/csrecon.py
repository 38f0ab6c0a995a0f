"""Compressive-sampling reconstruction of a sparse wideband power spectrum.

Several records are acquired at slightly different sub-Nyquist rates
f_s^(i) = 1/t_s^(i); each tone folds to a different pattern of record bins,
and a sparse non-negative wideband spectrum X on a grid of resolution 1/T
(two-sided: M = T * f_nyq bins covering [0, f_nyq), conjugate of bin m at
M - m) can be recovered by non-negative least squares from the stacked
linear systems

    Y_i ~= Phi_i X,

where the sampling matrix Phi_i maps wideband bin m to the record bins its
fold lands on. Bin m of the two-sided grid stands for the signed frequency
s/T with s = m for m <= M/2 and s = m - M (negative) otherwise — this is
what keeps a conjugate pair of wideband bins folded onto a conjugate pair
of record bins for every record rate. Record i (N_i bins, duration
T_i = N_i / f_s^(i)) images record bin n at signed wideband positions
a = (n + l N_i) * (T / T_i) for all integers l; column m of Phi_i therefore
collects every integer k = n + l N_i whose image position a = k T / T_i
lies within one grid bin of s, with linear interpolation ("hat") weight
w = 1 - |s - a| (the floor/ceil weight pair of an off-grid image sums to
1), at row n = k mod N_i, scaled by N_i / M.

Exact recovery of s tones from p incoherent records is expected for
p > 2s - 1 (noiseless); the mutual coherence mu (largest normalized column
inner product of the stacked matrix) measures design quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .spectral import PowerSpectrum

__all__ = [
    "WidebandGrid",
    "SamplingMatrix",
    "WidebandSpectrum",
    "CoherenceReport",
    "NnlsInfo",
    "NnlsError",
    "ReconstructionDiagnostics",
    "support_from_bands",
    "build_sampling_matrix",
    "coherence",
    "nnls_active_set",
    "reconstruct",
    "recovery_phase_diagram",
    "design_rates",
    "write_matrix_csv",
]


@dataclass(frozen=True)
class WidebandGrid:
    """The two-sided wideband frequency grid.

    Attributes:
        duration_s: Nominal duration T; grid resolution is 1/T.
        nyquist_rate_hz: Rate f_nyq a conventional sampler would need; the
            grid's M = T * f_nyq bins cover [0, f_nyq) with the conjugate of
            bin m at M - m (physical tones live below f_nyq / 2).
    """

    duration_s: float
    nyquist_rate_hz: float

    def __post_init__(self) -> None:
        if not (self.duration_s > 0.0 and math.isfinite(self.duration_s)):
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        if not (self.nyquist_rate_hz > 0.0 and math.isfinite(self.nyquist_rate_hz)):
            raise ValueError(f"nyquist_rate_hz must be > 0, got {self.nyquist_rate_hz}")
        m = self.duration_s * self.nyquist_rate_hz
        if abs(m - round(m)) > 1e-6 or round(m) < 2:
            raise ValueError(
                f"duration_s * nyquist_rate_hz must be an integer >= 2, got {m}"
            )

    @property
    def num_bins(self) -> int:
        """M = T * f_nyq."""
        return int(round(self.duration_s * self.nyquist_rate_hz))

    @property
    def resolution_hz(self) -> float:
        """Grid spacing 1/T."""
        return 1.0 / self.duration_s

    def frequency_hz(self, bins: int | np.ndarray) -> np.ndarray:
        """Absolute frequency of grid bin(s)."""
        return np.asarray(bins) * self.resolution_hz

    def bin_of(self, frequency_hz: float, tol: float = 1e-6) -> int:
        """Grid bin of an on-grid frequency (errors if off-grid by > tol bins)."""
        pos = frequency_hz * self.duration_s
        m = int(round(pos))
        if abs(pos - m) > tol:
            raise ValueError(
                f"frequency {frequency_hz} Hz is off-grid by {pos - m} bins"
            )
        if not (0 <= m < self.num_bins):
            raise ValueError(f"frequency {frequency_hz} Hz outside the grid")
        return m

    def conjugate_bin(self, m: int) -> int:
        """Mirror bin (M - m) mod M."""
        return (self.num_bins - int(m)) % self.num_bins


def support_from_bands(
    grid: WidebandGrid,
    bands_hz: Sequence[tuple[float, float]],
    *,
    include_conjugates: bool = True,
) -> tuple[np.ndarray, bool]:
    """Support bin indices for a union of frequency bands.

    Args:
        grid: The wideband grid.
        bands_hz: (f_lo, f_hi) pairs in Hz, each within [0, f_nyq/2].
        include_conjugates: Also include the mirrored bins (required for
            reconstruction from real-signal spectra).

    Returns:
        (sorted unique bin indices, overlap flag); the flag is True when the
        requested bands overlap each other (e.g. passbands of two harmonic
        orders), before deduplication.
    """
    m_total = grid.num_bins
    chunks: list[np.ndarray] = []
    total = 0
    for f_lo, f_hi in bands_hz:
        if not (0.0 <= f_lo < f_hi):
            raise ValueError(f"invalid band ({f_lo}, {f_hi})")
        if f_hi > grid.nyquist_rate_hz / 2.0:
            raise ValueError(
                f"band ({f_lo}, {f_hi}) exceeds the physical half-grid "
                f"{grid.nyquist_rate_hz / 2.0} Hz"
            )
        lo = int(math.ceil(f_lo * grid.duration_s - 1e-9))
        hi = int(math.floor(f_hi * grid.duration_s + 1e-9))
        bins = np.arange(lo, hi + 1, dtype=np.int64)
        chunks.append(bins)
        total += bins.size
    forward = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    overlapped = np.unique(forward).size < total
    if include_conjugates:
        conj = (m_total - forward) % m_total
        forward = np.concatenate([forward, conj])
    support = np.unique(forward)
    return support, bool(overlapped)


@dataclass(frozen=True)
class SamplingMatrix:
    """The interpolated folding matrix of one undersampled record.

    ``matrix`` has one row per (two-sided) record bin and one column per
    support entry; column j corresponds to wideband bin ``support[j]``.
    Entries are hat interpolation weights in [0, 1] scaled by N_i / M.

    Attributes:
        sample_rate_hz: Record rate f_s^(i).
        num_record_bins: N_i (record length; T_i = N_i / f_s^(i)).
        grid: Wideband grid shared by all records of a reconstruction.
        support: Sorted wideband bin indices the columns correspond to.
        matrix: CSC sparse matrix of shape (N_i, len(support)).
    """

    sample_rate_hz: float
    num_record_bins: int
    grid: WidebandGrid
    support: np.ndarray
    matrix: sp.csc_matrix

    @property
    def record_duration_s(self) -> float:
        """T_i = N_i / f_s^(i)."""
        return self.num_record_bins / self.sample_rate_hz

    @property
    def scale(self) -> float:
        """The uniform entry scale N_i / M."""
        return self.num_record_bins / self.grid.num_bins


def build_sampling_matrix(
    sample_rate_hz: float,
    num_record_bins: int,
    grid: WidebandGrid,
    support: np.ndarray | Sequence[int] | None = None,
) -> SamplingMatrix:
    """Build the folding matrix Phi_i of one record.

    For every support column m (signed grid index s = m, or m - M above the
    half grid), all image positions a = k * (T / T_i) (k any integer, row
    n = k mod N_i) with |s - a| < 1 contribute weight (1 - |s - a|) * N_i / M
    at row n. Integer folds (T_i = T and integer decimation) produce exactly
    one weight-N_i/M entry per column.

    Args:
        sample_rate_hz: f_s^(i) > 0.
        num_record_bins: N_i >= 2.
        grid: Wideband grid (f_nyq must cover the record: f_nyq >= f_s).
        support: Wideband bin indices to build columns for (default: the full
            grid — sized M, so only sensible for small grids).

    Returns:
        The sparse :class:`SamplingMatrix`.
    """
    if not sample_rate_hz > 0.0:
        raise ValueError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    if not (isinstance(num_record_bins, (int, np.integer)) and num_record_bins >= 2):
        raise ValueError(f"num_record_bins must be an integer >= 2, got {num_record_bins}")
    m_total = grid.num_bins
    if sample_rate_hz > grid.nyquist_rate_hz:
        raise ValueError(
            f"record rate {sample_rate_hz} exceeds the grid Nyquist rate "
            f"{grid.nyquist_rate_hz}"
        )
    if support is None:
        support_arr = np.arange(m_total, dtype=np.int64)
    else:
        support_arr = np.unique(np.asarray(support, dtype=np.int64))
        if support_arr.size and (support_arr[0] < 0 or support_arr[-1] >= m_total):
            raise ValueError("support bins out of [0, M)")

    n_i = int(num_record_bins)
    t_i = n_i / sample_rate_hz
    ratio = grid.duration_s / t_i  # wideband bins per unit k
    signed = np.where(
        support_arr <= m_total // 2, support_arr, support_arr - m_total
    ).astype(float)

    # Candidate integers k with image position a = k * ratio within one bin
    # of the signed index s: k in [(s-1)/ratio, (s+1)/ratio].
    k_lo = np.ceil((signed - 1.0) / ratio).astype(np.int64)
    n_candidates = int(math.floor(2.0 / ratio)) + 2
    rows_list: list[np.ndarray] = []
    cols_list: list[np.ndarray] = []
    weights_list: list[np.ndarray] = []
    col_index = np.arange(support_arr.size, dtype=np.int64)
    for offset in range(n_candidates):
        k = k_lo + offset
        a = k * ratio
        w = 1.0 - np.abs(signed - a)
        valid = w > 1e-12
        if not np.any(valid):
            continue
        rows_list.append((k[valid] % n_i).astype(np.int64))
        cols_list.append(col_index[valid])
        weights_list.append(w[valid])

    if rows_list:
        rows = np.concatenate(rows_list)
        cols = np.concatenate(cols_list)
        weights = np.concatenate(weights_list) * (n_i / m_total)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
        weights = np.empty(0)
    matrix = sp.csc_matrix(
        (weights, (rows, cols)), shape=(n_i, support_arr.size)
    )
    matrix.sum_duplicates()
    return SamplingMatrix(
        sample_rate_hz=float(sample_rate_hz),
        num_record_bins=n_i,
        grid=grid,
        support=support_arr,
        matrix=matrix,
    )


@dataclass(frozen=True)
class CoherenceReport:
    """Mutual coherence of a stacked sampling-matrix design.

    Attributes:
        mu: max_{i != j} |<phi_i, phi_j>| over l2-normalized columns.
        num_zero_columns: Columns with no nonzero entry in any record
            (excluded from normalization).
        num_columns: Total columns evaluated.
    """

    mu: float
    num_zero_columns: int
    num_columns: int


def coherence(
    matrices: Sequence[SamplingMatrix], *, block_columns: int = 4096
) -> CoherenceReport:
    """Mutual coherence of the stacked design (memory-bounded, exact).

    Args:
        matrices: >= 2 matrices sharing the same grid and support.
        block_columns: Gram-product block width.

    Raises:
        ValueError: On fewer than two matrices or mismatched grids/support.
    """
    if len(matrices) < 2:
        raise ValueError("coherence requires at least two matrices")
    grid = matrices[0].grid
    support = matrices[0].support
    for m in matrices[1:]:
        if m.grid != grid:
            raise ValueError("all matrices must share the same wideband grid")
        if m.support.shape != support.shape or np.any(m.support != support):
            raise ValueError("all matrices must share the same support")

    stacked = sp.vstack([m.matrix for m in matrices], format="csc")
    norms_sq = np.asarray(stacked.multiply(stacked).sum(axis=0)).ravel()
    nonzero = norms_sq > 0.0
    num_zero = int(np.count_nonzero(~nonzero))
    kept = stacked[:, nonzero]
    inv_norm = 1.0 / np.sqrt(norms_sq[nonzero])
    normalized = (kept @ sp.diags(inv_norm)).tocsc()

    n_cols = normalized.shape[1]
    mu = 0.0
    gram_left = normalized.T.tocsr()
    for lo in range(0, n_cols, block_columns):
        hi = min(lo + block_columns, n_cols)
        block = gram_left @ normalized[:, lo:hi]
        block = block.tocoo()
        off_diag = block.row != (block.col + lo)
        if np.any(off_diag):
            mu = max(mu, float(np.abs(block.data[off_diag]).max()))
    return CoherenceReport(mu=mu, num_zero_columns=num_zero, num_columns=int(support.size))


@dataclass(frozen=True)
class NnlsInfo:
    """Termination record of the active-set NNLS solve."""

    iterations: int
    residual_norm: float
    kkt_max: float
    converged: bool


class NnlsError(RuntimeError):
    """Raised when NNLS hits the iteration cap before KKT tolerance."""

    def __init__(self, message: str, iterations: int, residual_norm: float):
        super().__init__(
            f"{message} (iterations={iterations}, residual_norm={residual_norm})"
        )
        self.iterations = iterations
        self.residual_norm = residual_norm


def nnls_active_set(
    a_matrix: sp.spmatrix | np.ndarray,
    b: np.ndarray,
    *,
    tol: float = 1e-10,
    max_iterations: int | None = None,
) -> tuple[np.ndarray, NnlsInfo]:
    """Solve min ||A x - b||_2 subject to x >= 0 (Lawson-Hanson active set).

    Columns enter the passive set by largest positive gradient
    w = A^T (b - A x); the unconstrained least-squares subproblem on the
    passive columns is solved densely (the passive set stays small for
    sparse spectra). Terminates when max(w over active columns) <=
    tol * ||A^T b||_inf (KKT) or raises after ``max_iterations`` (default
    10x the column count).

    Returns:
        (x, info) with x >= 0 elementwise.
    """
    is_sparse = sp.issparse(a_matrix)
    b = np.asarray(b, dtype=float)
    n_rows, n_cols = a_matrix.shape
    if b.shape != (n_rows,):
        raise ValueError(f"b must have shape ({n_rows},), got {b.shape}")
    if max_iterations is None:
        max_iterations = max(10 * n_cols, 30)

    at = a_matrix.T.tocsr() if is_sparse else np.ascontiguousarray(a_matrix.T)
    x = np.zeros(n_cols)
    passive: list[int] = []
    passive_mask = np.zeros(n_cols, dtype=bool)
    resid = b.copy()
    w_scale = float(np.max(np.abs(at @ b))) if n_cols else 0.0
    if w_scale == 0.0:
        return x, NnlsInfo(0, float(np.linalg.norm(b)), 0.0, True)
    threshold = tol * w_scale

    def dense_passive() -> np.ndarray:
        cols = a_matrix[:, passive]
        return cols.toarray() if is_sparse else np.asarray(cols, dtype=float)

    iterations = 0
    kkt_max = math.inf
    while iterations < max_iterations:
        iterations += 1
        w = at @ resid
        w_active = np.where(passive_mask, -np.inf, w)
        j = int(np.argmax(w_active))
        kkt_max = float(w_active[j])
        if kkt_max <= threshold:
            return x, NnlsInfo(
                iterations, float(np.linalg.norm(resid)), kkt_max, True
            )
        passive.append(j)
        passive_mask[j] = True

        while True:
            ap = dense_passive()
            z, *_ = np.linalg.lstsq(ap, b, rcond=None)
            if np.all(z > 0.0):
                x[:] = 0.0
                x[passive] = z
                break
            xp = x[passive]
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(z <= 0.0, xp / (xp - z), np.inf)
            alpha = float(np.min(steps))
            xp = xp + alpha * (z - xp)
            x[:] = 0.0
            x[passive] = np.maximum(xp, 0.0)
            drop = [idx for idx, val in zip(passive, x[passive]) if val <= 0.0]
            for idx in drop:
                passive_mask[idx] = False
            passive = [idx for idx in passive if passive_mask[idx]]
            if not passive:
                break
        resid = b - (a_matrix @ x)

    raise NnlsError(
        "NNLS iteration cap reached before KKT tolerance",
        iterations,
        float(np.linalg.norm(b - a_matrix @ x)),
    )


@dataclass(frozen=True)
class WidebandSpectrum:
    """Recovered non-negative wideband spectrum on the support bins.

    Conceptually a length-M vector X >= 0 (zero off support); stored sparsely
    as (support, components). Component units are squared per-sample count
    amplitude: a folded tone of count amplitude a solves to X = a^2
    regardless of the record it came from.

    Attributes:
        grid: The wideband grid (M = T * f_nyq bins, resolution 1/T).
        support: Wideband bin indices carrying values.
        components: X values on ``support`` (>= 0).
    """

    grid: WidebandGrid
    support: np.ndarray
    components: np.ndarray

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64)
        comps = np.asarray(self.components, dtype=float)
        if support.shape != comps.shape or support.ndim != 1:
            raise ValueError("support and components must be matching 1-D arrays")
        if comps.size and comps.min() < 0.0:
            raise ValueError("components must be non-negative")
        support.setflags(write=False)
        comps.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "components", comps)

    @property
    def nyquist_rate_hz(self) -> float:
        return self.grid.nyquist_rate_hz

    @property
    def resolution_hz(self) -> float:
        return self.grid.resolution_hz

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.grid.frequency_hz(self.support)

    def dense(self) -> np.ndarray:
        """Materialize the length-M component vector (small grids only)."""
        x = np.zeros(self.grid.num_bins)
        x[self.support] = self.components
        return x

    def value_at_bin(self, m: int) -> float:
        """X at wideband bin m (0 off support)."""
        idx = np.searchsorted(self.support, m)
        if idx < self.support.size and self.support[idx] == m:
            return float(self.components[idx])
        return 0.0


@dataclass(frozen=True)
class ReconstructionDiagnostics:
    """Solver and conditioning record of one reconstruction."""

    iterations: int
    residual_norm: float
    kkt_max: float
    converged: bool
    rows_used: int
    floor_estimates: np.ndarray
    num_dc_coupled_columns: int


def _two_sided(power: np.ndarray, num_samples: int) -> np.ndarray:
    """Mirror a one-sided power spectrum back to full two-sided length."""
    n = num_samples
    full = np.empty(n)
    half = power.size  # floor(n/2) + 1
    full[:half] = power
    if n % 2 == 0:
        full[half:] = power[1:-1][::-1]
    else:
        full[half:] = power[1:][::-1]
    return full


def reconstruct(
    spectra: Sequence[PowerSpectrum],
    matrices: Sequence[SamplingMatrix],
    *,
    floor_subtraction: str | None = "median",
    tol: float = 1e-10,
) -> tuple[WidebandSpectrum, ReconstructionDiagnostics]:
    """Recover the sparse wideband spectrum from undersampled records.

    Each record's one-sided power spectrum is mirrored to two-sided form,
    optionally floor-subtracted (median estimate — an additive flat noise
    floor would otherwise bias the non-negative solution), scaled by
    D_i = 4 / (M N_i) so a tone of per-sample count amplitude a contributes
    the same X = a^2 in every record, and stacked row-wise over the rows its
    support actually folds to (the DC row is always excluded). The stacked
    non-negative least-squares problem is solved by
    :func:`nnls_active_set`.

    Args:
        spectra: One PowerSpectrum per record (one-sided).
        matrices: Matching sampling matrices (same order, same grid/support).
        floor_subtraction: "median" (default) or None.
        tol: NNLS KKT tolerance (relative).

    Returns:
        (spectrum, diagnostics).

    Raises:
        ValueError: On inconsistent grids, supports, record shapes or rates.
        NnlsError: If the solver hits its iteration cap.
    """
    if len(spectra) != len(matrices) or not spectra:
        raise ValueError("need equally many spectra and matrices (>= 1)")
    if floor_subtraction not in (None, "median"):
        raise ValueError(f"unknown floor_subtraction {floor_subtraction!r}")
    grid = matrices[0].grid
    support = matrices[0].support
    blocks: list[sp.spmatrix] = []
    data: list[np.ndarray] = []
    floors = np.zeros(len(spectra))
    rows_used = 0
    dc_coupled: set[int] = set()
    for i, (spec, mat) in enumerate(zip(spectra, matrices)):
        if mat.grid != grid:
            raise ValueError("matrices use inconsistent wideband grids")
        if mat.support.shape != support.shape or np.any(mat.support != support):
            raise ValueError("matrices use inconsistent supports")
        if spec.num_samples != mat.num_record_bins:
            raise ValueError(
                f"record {i}: spectrum has N={spec.num_samples} but the matrix "
                f"expects N_i={mat.num_record_bins}"
            )
        if not math.isclose(spec.sample_rate_hz, mat.sample_rate_hz, rel_tol=1e-9):
            raise ValueError(
                f"record {i}: spectrum rate {spec.sample_rate_hz} != matrix rate "
                f"{mat.sample_rate_hz}"
            )
        n_i = mat.num_record_bins
        y_full = _two_sided(np.asarray(spec.power, dtype=float), n_i)
        if floor_subtraction == "median":
            floors[i] = float(np.median(spec.power[1:]))
            y_full = y_full - floors[i]
        y_full *= 4.0 / (grid.num_bins * n_i)

        csr = mat.matrix.tocsr()
        touched = np.unique(mat.matrix.tocoo().row)
        if touched.size and touched[0] == 0:
            cols_at_dc = mat.matrix.tocoo().col[mat.matrix.tocoo().row == 0]
            dc_coupled.update(int(c) for c in np.unique(cols_at_dc))
            touched = touched[1:]
        blocks.append(csr[touched, :])
        data.append(y_full[touched])
        rows_used += int(touched.size)

    a_stacked = sp.vstack(blocks, format="csc")
    b_stacked = np.concatenate(data)
    x, info = nnls_active_set(a_stacked, b_stacked, tol=tol)
    spectrum = WidebandSpectrum(grid=grid, support=support, components=x)
    diagnostics = ReconstructionDiagnostics(
        iterations=info.iterations,
        residual_norm=info.residual_norm,
        kkt_max=info.kkt_max,
        converged=info.converged,
        rows_used=rows_used,
        floor_estimates=floors,
        num_dc_coupled_columns=len(dc_coupled),
    )
    return spectrum, diagnostics


def recovery_phase_diagram(
    sparsity_values: Sequence[int],
    record_counts: Sequence[int],
    trials: int,
    seed: int,
    *,
    grid_bins: int = 1024,
    record_bins_range: tuple[int, int] = (48, 96),
    amplitude_range: tuple[float, float] = (0.5, 2.0),
) -> np.ndarray:
    """Monte Carlo exact-recovery success rates over (sparsity, record count).

    Noiseless synthetic instances on a small grid (M = ``grid_bins`` <= 4096,
    T = 1 s, integer folds): each trial draws p distinct record lengths,
    s tone bins (redrawn if a tone folds onto a DC/Nyquist row of any record
    — degenerate folds are not identifiable), symmetric conjugate amplitudes,
    forms Y_i = Phi_i X exactly, and solves the stacked NNLS on the full
    grid. Success = exact support recovery with component error
    <= 1e-6 * max(X).

    Returns:
        success[s_index, p_index] in [0, 1].
    """
    if grid_bins > 4096:
        raise ValueError("phase diagram is desk-scale: grid_bins <= 4096")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = WidebandGrid(duration_s=1.0, nyquist_rate_hz=float(grid_bins))
    m_total = grid.num_bins
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lo_n, hi_n = record_bins_range
    if not (2 <= lo_n < hi_n):
        raise ValueError(f"invalid record_bins_range {record_bins_range}")

    success = np.zeros((len(sparsity_values), len(record_counts)))
    for si, s in enumerate(sparsity_values):
        for pi, p in enumerate(record_counts):
            wins = 0
            for _ in range(trials):
                n_is = rng.choice(np.arange(lo_n, hi_n), size=p, replace=False)
                mats = [
                    build_sampling_matrix(float(n_i), int(n_i), grid)
                    for n_i in n_is
                ]
                # tone bins with non-degenerate folds in every record
                tones: list[int] = []
                while len(tones) < s:
                    m = int(rng.integers(1, m_total // 2))
                    if m in tones:
                        continue
                    folds = [m % n_i for n_i in n_is]
                    if any(f == 0 or 2 * f == n_i for f, n_i in zip(folds, n_is)):
                        continue
                    tones.append(m)
                x_true = np.zeros(m_total)
                for m in tones:
                    amp = rng.uniform(*amplitude_range)
                    x_true[m] = amp
                    x_true[grid.conjugate_bin(m)] = amp
                a_stacked = sp.vstack([mt.matrix for mt in mats], format="csc")
                b = a_stacked @ x_true
                x_hat, _ = nnls_active_set(a_stacked, b)
                err = np.max(np.abs(x_hat - x_true))
                recovered = set(np.nonzero(x_hat > 1e-6 * x_true.max())[0])
                truth = set(np.nonzero(x_true)[0])
                if recovered == truth and err <= 1e-6 * x_true.max():
                    wins += 1
            success[si, pi] = wins / trials
    return success


def design_rates(
    num_rates: int,
    base_period_s: float,
    max_extra_s: float,
    seed: int,
    *,
    time_grid_s: float = 1e-7,
) -> np.ndarray:
    """Draw ``num_rates`` distinct sampling periods for a CS acquisition.

    Periods are base_period_s + delta with delta uniform on a
    ``time_grid_s``-spaced grid in [0, max_extra_s] (hardware delays are
    quantized), redrawn until distinct.

    Returns:
        Sample rates 1/t_s in Hz, sorted descending (shortest period first).
    """
    if num_rates < 2:
        raise ValueError("num_rates must be >= 2")
    if not (base_period_s > 0.0 and max_extra_s > 0.0):
        raise ValueError("base_period_s and max_extra_s must be > 0")
    levels = int(math.floor(max_extra_s / time_grid_s)) + 1
    if levels < num_rates:
        raise ValueError("time grid too coarse for the requested number of rates")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    chosen = rng.choice(levels, size=num_rates, replace=False)
    periods = base_period_s + np.sort(chosen) * time_grid_s
    return 1.0 / periods


def write_matrix_csv(matrix: SamplingMatrix, path: str | Path) -> Path:
    """Export a sampling matrix as coordinate-list CSV (row, wideband_bin, weight)."""
    path = Path(path)
    coo = matrix.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"# sample_rate_hz={matrix.sample_rate_hz!r}",
        f"# num_record_bins={matrix.num_record_bins}",
        f"# grid_bins={matrix.grid.num_bins}",
        f"# grid_resolution_hz={matrix.grid.resolution_hz!r}",
        "row,wideband_bin,weight",
    ]
    sup = matrix.support
    lines.extend(
        f"{coo.row[i]},{sup[coo.col[i]]},{float(coo.data[i])!r}" for i in order
    )
    path.write_text("\n".join(lines) + "\n")
    return path
