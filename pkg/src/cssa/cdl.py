"""Batch convolutional dictionary learning with coupled sparse codes.

Filters are learned under the unit-ball constraint by alternating two
steps: joint sparse coding of all training sample sets with the
current dictionaries, and a constrained least-squares update of each
modality's filters with the codes held fixed. The multimodal problem
separates into independent per-modality filter updates because its
objective is a plain sum over modalities.

The filter update itself runs a small inner ADMM: the quadratic step
is solved exactly in the frequency domain, where the per-bin system is
the scaled identity plus one rank-one term per training sample and
yields to iterated Sherman-Morrison; the splitting variable is
projected onto the constraint set (supported on the q x q corner, l2
norm at most one).
"""

from dataclasses import dataclass, field

import numpy as np

from .solver import Regularizer, SolverOptions, encode
from .spectral import tikhonov_lowpass


@dataclass(frozen=True)
class Dictionary:
    """K square convolutional filters under the unit-ball constraint."""

    filters: np.ndarray  # (K, q, q)

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.float64)
        if filters.ndim != 3 or filters.shape[1] != filters.shape[2]:
            raise ValueError(
                f"expected (K, q, q) filter stack, got {filters.shape}"
            )
        norms = np.linalg.norm(filters.reshape(len(filters), -1), axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise ValueError(
                f"filter norm {norms.max():.12f} violates the unit ball"
            )
        object.__setattr__(self, "filters", filters)

    @property
    def num_filters(self):
        return self.filters.shape[0]

    @property
    def filter_size(self):
        return self.filters.shape[1]


@dataclass(frozen=True)
class DictionarySet:
    """One dictionary per modality, sharing filter count and size."""

    dictionaries: tuple

    def __post_init__(self):
        dicts = tuple(self.dictionaries)
        if not dicts:
            raise ValueError("empty dictionary set")
        k, q = dicts[0].num_filters, dicts[0].filter_size
        for d in dicts[1:]:
            if d.num_filters != k or d.filter_size != q:
                raise ValueError("dictionaries must share filter count and size")
        object.__setattr__(self, "dictionaries", dicts)

    def __len__(self):
        return len(self.dictionaries)

    def __getitem__(self, n):
        return self.dictionaries[n]

    @property
    def num_filters(self):
        return self.dictionaries[0].num_filters

    @property
    def filter_size(self):
        return self.dictionaries[0].filter_size


@dataclass(frozen=True)
class TrainingBatch:
    """T sample sets of N modalities each, in a fixed modality order."""

    samples: np.ndarray  # (T, N, H, W)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 4:
            raise ValueError(
                f"expected (T, N, H, W) training samples, got {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def num_sets(self):
        return self.samples.shape[0]

    @property
    def num_modalities(self):
        return self.samples.shape[1]


@dataclass
class CdlOptions:
    """Alternation schedule, encode settings, and filter-update penalty.

    When ``highpass`` is set (the default), training planes are run
    through the Tikhonov lowpass split first and the filters are
    learned on the highpass component, matching what the fusion
    pipelines encode.
    """

    num_filters: int = 32
    filter_size: int = 8
    outer_iters: int = 20
    sparse_reg: Regularizer = field(
        default_factory=lambda: Regularizer.l1_l21(0.001, 0.01)
    )
    sparse_opts: SolverOptions = field(
        default_factory=lambda: SolverOptions(rho=10.0, max_iter=100)
    )
    dict_rho: float = 1.0
    dict_inner_iters: int = 10
    highpass: bool = True
    lowpass_reg: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.num_filters < 1 or self.filter_size < 1:
            raise ValueError("need at least one filter of positive size")
        if self.outer_iters < 1 or self.dict_inner_iters < 1:
            raise ValueError("iteration counts must be positive")
        if self.dict_rho <= 0:
            raise ValueError("dict_rho must be positive")


@dataclass(frozen=True)
class LearnResult:
    """Learned dictionaries plus the objective recorded per alternation."""

    dictionaries: DictionarySet
    objectives: np.ndarray


def project_dictionary(g, q):
    """Project a plane onto the filter constraint set: keep the
    top-left q x q support, then rescale to unit norm if outside the
    ball."""
    g = np.asarray(g, dtype=np.float64)
    if q > g.shape[0] or q > g.shape[1]:
        raise ValueError(f"filter size {q} exceeds plane shape {g.shape}")
    d = g[:q, :q].copy()
    norm = np.linalg.norm(d)
    if norm > 1.0:
        d /= norm
    return d


def init_dictionary(num_filters, filter_size, seed):
    """Seeded random dictionary: unit-variance draws projected onto
    the constraint set."""
    if num_filters < 1 or filter_size < 1:
        raise ValueError("need at least one filter of positive size")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((num_filters, filter_size, filter_size))
    return Dictionary(np.stack([project_dictionary(f, filter_size) for f in raw]))


def _ism_solve(Uf, sigma, b):
    """Solve ``(sigma I + sum_t u_t u_t^H) x = b`` per frequency bin.

    ``Uf`` stacks the T rank-one factors on axis 0 with the filter
    axis at -3; the inverse is applied by chaining T Sherman-Morrison
    updates, carrying the partial inverses of both the right-hand side
    and the remaining factors.
    """
    ainv_b = b / sigma
    ainv_u = Uf / sigma
    for t in range(Uf.shape[0]):
        u = Uf[t]
        au = ainv_u[t]
        denom = 1.0 + np.sum(np.conj(u) * au, axis=-3, keepdims=True)
        ainv_b = ainv_b - au * (np.sum(np.conj(u) * ainv_b, axis=-3,
                                       keepdims=True) / denom)
        for s in range(t + 1, Uf.shape[0]):
            ainv_u[s] -= au * (np.sum(np.conj(u) * ainv_u[s], axis=-3,
                                      keepdims=True) / denom)
    return ainv_b


def dict_update(signals, coeffs, q, *, rho=1.0, iterations=10, init=None):
    """Constrained least-squares filter update for one modality.

    Minimizes the average reconstruction error
    ``(1/T) sum_t 0.5*||sum_k D_k * X_k^(t) - s^(t)||^2`` over filters
    in the constraint set, with the coefficient maps fixed. Runs a
    fixed number of ADMM iterations; ``init`` warm-starts the filters
    (required to leave the dictionary unchanged on degenerate
    all-zero coefficients).

    Parameters
    ----------
    signals : array_like, shape (T, H, W)
    coeffs : array_like, shape (T, K, H, W)
    q : int
      Filter side length.
    rho : float
      Inner ADMM penalty.
    iterations : int
      Fixed inner iteration count.
    init : Dictionary, optional
      Warm-start filters.

    Returns
    -------
    Dictionary
    """
    S = np.asarray(signals, dtype=np.float64)
    C = np.asarray(coeffs, dtype=np.float64)
    if S.ndim != 3 or C.ndim != 4 or C.shape[0] != S.shape[0] \
            or C.shape[2:] != S.shape[1:]:
        raise ValueError(
            f"inconsistent shapes: signals {S.shape}, coefficients {C.shape}"
        )
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    t_sets, k = C.shape[:2]
    h, w = S.shape[1:]
    if q > h or q > w:
        raise ValueError(f"filter size {q} exceeds signal grid {h}x{w}")

    Cf = np.fft.rfft2(C)
    Sf = np.fft.rfft2(S)
    # Factors scaled by 1/sqrt(T) so their outer products carry the 1/T.
    Uf = np.conj(Cf) / np.sqrt(t_sets)
    B0 = np.mean(np.conj(Cf) * Sf[:, None], axis=0)

    if init is not None:
        if init.num_filters != k or init.filter_size != q:
            raise ValueError("warm-start dictionary shape mismatch")
        d = init.filters
    else:
        d = np.zeros((k, q, q))
    Hvar = np.zeros((k, h, w))
    Hvar[:, :q, :q] = d
    Uadm = np.zeros((k, h, w))

    for _ in range(iterations):
        Zf = np.fft.rfft2(Hvar - Uadm)
        Gf = _ism_solve(Uf, rho, B0 + rho * Zf)
        G = np.fft.irfft2(Gf, s=(h, w))
        V = G + Uadm
        Hvar = np.zeros((k, h, w))
        for j in range(k):
            Hvar[j, :q, :q] = project_dictionary(V[j], q)
        Uadm += G - Hvar

    return Dictionary(Hvar[:, :q, :q].copy())


def _fidelity(samples, coeffs, dicts, Dfr_cache=None):
    """Average reconstruction error of the multimodal CDL objective:
    ``(1/T) sum_t 0.5 sum_n ||sum_k D_k^(n) * X_k^(t,n) - s^(t,n)||^2``."""
    t_sets, n = samples.shape[:2]
    h, w = samples.shape[2:]
    if Dfr_cache is None:
        Dfr_cache = _modality_spectra(dicts, h, w)
    recon = np.fft.irfft2(
        np.sum(Dfr_cache[None] * np.fft.rfft2(coeffs), axis=2), s=(h, w)
    )
    residual = recon - samples
    return float(0.5 * np.sum(residual * residual) / t_sets)


def _modality_spectra(dicts, h, w):
    k, q = dicts.num_filters, dicts.filter_size
    padded = np.zeros((len(dicts), k, h, w))
    for n in range(len(dicts)):
        padded[n, :, :q, :q] = dicts[n].filters
    return np.fft.rfft2(padded)


def learn(batch: TrainingBatch, opts: CdlOptions = None, init=None):
    """Alternate joint sparse coding and per-modality filter updates.

    Each alternation encodes every training sample set against the
    current dictionaries (jointly across modalities), then updates the
    N dictionaries independently with the codes fixed, warm-starting
    each filter update from the previous filters. The reconstruction
    objective is recorded after every alternation.

    Parameters
    ----------
    batch : TrainingBatch
    opts : CdlOptions, optional
    init : DictionarySet, optional
      Starting dictionaries; defaults to seeded random filters
      (seed + n for modality n).

    Returns
    -------
    LearnResult
    """
    opts = opts or CdlOptions()
    samples = batch.samples
    t_sets, n, h, w = samples.shape
    if opts.highpass:
        low = np.empty_like(samples)
        for t in range(t_sets):
            for m in range(n):
                low[t, m] = tikhonov_lowpass(samples[t, m], opts.lowpass_reg)
        samples = samples - low

    if init is None:
        dicts = DictionarySet(tuple(
            init_dictionary(opts.num_filters, opts.filter_size, opts.seed + m)
            for m in range(n)
        ))
    else:
        dicts = init
    k, q = dicts.num_filters, dicts.filter_size

    objectives = []
    for _ in range(opts.outer_iters):
        coeffs = np.empty((t_sets, n, k, h, w))
        for t in range(t_sets):
            coeffs[t], _ = encode(
                samples[t], dicts, opts.sparse_reg, opts.sparse_opts
            )
        dicts = DictionarySet(tuple(
            dict_update(
                samples[:, m], coeffs[:, m], q,
                rho=opts.dict_rho, iterations=opts.dict_inner_iters,
                init=dicts[m],
            )
            for m in range(n)
        ))
        objectives.append(_fidelity(samples, coeffs, dicts))

    return LearnResult(dicts, np.asarray(objectives))
