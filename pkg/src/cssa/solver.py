"""ADMM solver for convolutional simultaneous sparse approximation.

Approximates N dependent signals as sums of circular convolutions of
shared (or per-modality) dictionary filters with sparse coefficient
maps whose supports are coupled across the signals. The coupling is
controlled by the regularizer:

* ``l21``   - group (row) sparsity: the length-N vector of coefficients
  at each (filter, pixel) site lives or dies as a whole, so the maps
  have identical supports.
* ``linf1`` - max-magnitude coupling per site.
* ``l1l21`` - elementwise plus group sparsity; larger elementwise
  weight relaxes the identical-support structure.
* ``l1``    - plain independent sparse coding, no coupling.

The solver splits the problem with an auxiliary variable carrying the
data term, solves the per-signal convolutional regressions exactly in
the frequency domain (diagonal plus rank-one system via the
Sherman-Morrison identity), and applies the regularizer through a
single vectorized proximal step on the (filter, pixel) rows.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import prox
from .spectral import pad_filter


class RegKind(str, enum.Enum):
    L1 = "l1"
    L21 = "l21"
    LINF1 = "linf1"
    L1_L21 = "l1l21"


@dataclass(frozen=True)
class Regularizer:
    """Sparsity structure and weights for the coefficient update.

    ``lam`` is used by the single-weight kinds (l1, l21, linf1);
    ``gamma1``/``gamma2`` are the elementwise and group weights of the
    combined kind. Inactive weights are ignored.
    """

    kind: RegKind
    lam: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        if self.kind is RegKind.L1_L21:
            if self.gamma1 < 0 or self.gamma2 < 0:
                raise ValueError("gamma weights must be nonnegative")
        elif self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @classmethod
    def l1(cls, lam):
        return cls(RegKind.L1, lam=lam)

    @classmethod
    def l21(cls, lam):
        return cls(RegKind.L21, lam=lam)

    @classmethod
    def linf1(cls, lam):
        return cls(RegKind.LINF1, lam=lam)

    @classmethod
    def l1_l21(cls, gamma1, gamma2):
        return cls(RegKind.L1_L21, gamma1=gamma1, gamma2=gamma2)


@dataclass
class SolverOptions:
    """ADMM penalty, iteration cap, and stopping tolerances.

    The stopping tolerances are absolute residual tolerances scaled
    internally by sqrt(N*K*H*W).
    """

    rho: float = 10.0
    max_iter: int = 200
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    record_history: bool = False

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("stopping tolerances must be positive")


@dataclass
class AdmmState:
    """State of one encode run: splitting variables and residual trace."""

    Y: np.ndarray
    X: np.ndarray
    U: np.ndarray
    iter: int = 0
    primal_res: list = field(default_factory=list)
    dual_res: list = field(default_factory=list)


@dataclass
class EncodeDiagnostics:
    """Structural measures of the coefficient maps from one encode.

    ``sparsity_ratio`` is the nonzero fraction over all N*K*P entries,
    ``common_support_pct`` the percentage of support sites shared by
    all N maps relative to sites active in any, and ``approx_error``
    the total residual power sum_n ||sum_k D_k * X_k - s_n||^2.
    Residual histories are populated when the solver is asked to
    record them.
    """

    sparsity_ratio: float
    common_support_pct: float
    approx_error: float
    iterations: int
    primal_residuals: np.ndarray | None = None
    dual_residuals: np.ndarray | None = None


def _dict_stack(dicts, n_signals):
    """Normalize dictionary input to a (Nd, K, q, q) float array with
    Nd in {1, N}: one shared dictionary or one per signal."""
    from .cdl import Dictionary, DictionarySet

    if isinstance(dicts, Dictionary):
        stack = dicts.filters[None]
    elif isinstance(dicts, DictionarySet):
        stack = np.stack([d.filters for d in dicts.dictionaries])
    else:
        stack = np.asarray(dicts, dtype=np.float64)
        if stack.ndim == 3:
            stack = stack[None]
    if stack.ndim != 4 or stack.shape[2] != stack.shape[3]:
        raise ValueError(f"expected (K, q, q) filters, got shape {stack.shape}")
    if stack.shape[0] not in (1, n_signals):
        raise ValueError(
            f"need 1 or {n_signals} dictionaries, got {stack.shape[0]}"
        )
    return stack


def _filter_spectra(dstack, height, width, rfft=True):
    """Half-plane (or full) spectra of the zero-padded filters."""
    nd, k, q, _ = dstack.shape
    if q > height or q > width:
        raise ValueError(
            f"filter size {q} exceeds signal grid {height}x{width}"
        )
    padded = np.zeros((nd, k, height, width))
    padded[:, :, :q, :q] = dstack
    return np.fft.rfft2(padded) if rfft else np.fft.fft2(padded)


def _ydata_solve(Df, b, rho, denom=None):
    """Solve ``(D^H D + rho I) Y = b`` independently per frequency bin.

    ``Df`` holds the K filter spectra on axis -3; the per-bin system
    matrix is a rank-one update of the scaled identity, so the
    Sherman-Morrison identity gives the exact solution in closed form.
    Shapes broadcast over any leading axes; ``denom`` may carry the
    precomputed ``rho + sum_k |D_k|^2``.
    """
    c = np.sum(Df * b, axis=-3, keepdims=True)
    if denom is None:
        denom = rho + np.sum(np.real(np.conj(Df) * Df), axis=-3, keepdims=True)
    return (b - np.conj(Df) * (c / denom)) / rho


def y_update(signal, Z, dict_spectra, rho):
    """Exact minimizer of the per-signal convolutional regression.

    Minimizes ``0.5*||sum_k D_k * Y_k - s||^2 + (rho/2)*||Y - Z||_F^2``
    over the K coefficient maps Y, where Z collects the current target
    (primary variable minus scaled multiplier) and ``dict_spectra`` are
    the full DFTs of the zero-padded filters.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    signal = np.asarray(signal, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    Df = np.asarray(dict_spectra, dtype=np.complex128)
    if Z.shape[1:] != signal.shape or Df.shape != Z.shape:
        raise ValueError(
            f"inconsistent shapes: signal {signal.shape}, Z {Z.shape}, "
            f"spectra {Df.shape}"
        )
    b = np.conj(Df) * np.fft.fft2(signal) + rho * np.fft.fft2(Z)
    Yf = _ydata_solve(Df, b, rho)
    return np.fft.ifft2(Yf).real


def x_update(W, reg: Regularizer, rho):
    """Row-wise proximal step on the stacked maps W = Y + U.

    Each length-N row (the coefficients of one (filter, pixel) site
    across the N signals) passes through the proximal operator of the
    regularizer scaled by 1/rho.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    rows = np.moveaxis(np.asarray(W, dtype=np.float64), 0, -1)
    if reg.kind is RegKind.L1:
        out = prox.shrink(rows, reg.lam / rho)
    elif reg.kind is RegKind.L21:
        out = prox.prox_l2(rows, reg.lam / rho)
    elif reg.kind is RegKind.LINF1:
        out = prox.prox_linf(rows, reg.lam / rho)
    else:
        weights = prox.ProxWeights(reg.gamma1 / rho, reg.gamma2 / rho)
        out = prox.prox_l1_l2(rows, weights)
    return np.moveaxis(out, -1, 0)


def encode(signals, dicts, reg: Regularizer, opts: SolverOptions = None):
    """Jointly sparse-code N signals against 1 or N dictionaries.

    Runs ADMM from a zero start: the auxiliary variable is updated by
    the exact frequency-domain regression per signal, the primary
    variable by the vectorized row prox, and the scaled multipliers by
    the running constraint violation. Stops when both the primal
    residual ``||Y - X||_F`` and the dual residual
    ``rho*||X_new - X||_F`` fall below their scaled tolerances, or at
    the iteration cap.

    Parameters
    ----------
    signals : array_like, shape (N, H, W) or a list of planes
    dicts : filter stack, `Dictionary`, or `DictionarySet`
      A single dictionary serves all signals; with N dictionaries,
      dictionary n encodes signal n.
    reg : Regularizer
    opts : SolverOptions, optional

    Returns
    -------
    X : ndarray, shape (N, K, H, W)
    diagnostics : EncodeDiagnostics
    """
    opts = opts or SolverOptions()
    S = np.stack([np.asarray(s, dtype=np.float64) for s in signals])
    if S.ndim != 3:
        raise ValueError(f"expected N same-size planes, got shape {S.shape}")
    n, h, w = S.shape
    dstack = _dict_stack(dicts, n)
    k = dstack.shape[1]

    Df = _filter_spectra(dstack, h, w)
    denom = opts.rho + np.sum(np.real(np.conj(Df) * Df), axis=1, keepdims=True)
    DHSf = np.conj(Df) * np.fft.rfft2(S)[:, None]

    state = AdmmState(
        Y=np.zeros((n, k, h, w)),
        X=np.zeros((n, k, h, w)),
        U=np.zeros((n, k, h, w)),
    )
    scale = np.sqrt(n * k * h * w)
    eps_pri = opts.tol_primal * scale
    eps_dua = opts.tol_dual * scale

    for i in range(opts.max_iter):
        Zf = np.fft.rfft2(state.X - state.U)
        Yf = _ydata_solve(Df, DHSf + opts.rho * Zf, opts.rho, denom)
        state.Y = np.fft.irfft2(Yf, s=(h, w))

        X_new = x_update(state.Y + state.U, reg, opts.rho)
        state.U += state.Y - X_new

        primal = np.linalg.norm(state.Y - X_new)
        dual = opts.rho * np.linalg.norm(X_new - state.X)
        state.X = X_new
        state.iter = i + 1
        state.primal_res.append(primal)
        state.dual_res.append(dual)
        if primal <= eps_pri and dual <= eps_dua:
            break

    recon_err = approx_error(S, state.X, dstack)
    diag = EncodeDiagnostics(
        sparsity_ratio=sparsity_ratio(state.X),
        common_support_pct=_overlap_pct(_support(state.X, None)),
        approx_error=recon_err,
        iterations=state.iter,
    )
    if opts.record_history:
        diag.primal_residuals = np.asarray(state.primal_res)
        diag.dual_residuals = np.asarray(state.dual_res)
    return state.X, diag


def reconstruct(X, dicts):
    """Per-signal sum of circular convolutions ``sum_k D_k * X_k``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected (N, K, H, W) coefficients, got {X.shape}")
    n, k, h, w = X.shape
    dstack = _dict_stack(dicts, n)
    if dstack.shape[1] != k:
        raise ValueError(
            f"dictionary has {dstack.shape[1]} filters, coefficients have {k}"
        )
    Df = _filter_spectra(dstack, h, w)
    return np.fft.irfft2(np.sum(Df * np.fft.rfft2(X), axis=1), s=(h, w))


def _support(X, zero_tol):
    """Boolean support mask; default tolerance is 1e-8 * max|X|."""
    X = np.asarray(X, dtype=np.float64)
    if zero_tol is None:
        zero_tol = 1e-8 * np.max(np.abs(X), initial=0.0)
    return np.abs(X) > zero_tol


def _overlap_pct(sup):
    union = np.logical_or.reduce(sup, axis=0)
    total = np.count_nonzero(union)
    if total == 0:
        return 0.0
    inter = np.logical_and.reduce(sup, axis=0)
    return 100.0 * np.count_nonzero(inter) / total


def support_overlap(X, zero_tol=None):
    """Percentage of support sites common to all N maps, relative to
    sites active in any of them. Zero when the union is empty."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4 or X.shape[0] < 2:
        raise ValueError("support overlap needs at least 2 coefficient sets")
    return _overlap_pct(_support(X, zero_tol))


def sparsity_ratio(X, zero_tol=None):
    """Fraction of nonzero coefficients over all N*K*P entries."""
    return float(np.mean(_support(X, zero_tol)))


def approx_error(signals, X, dicts):
    """Total residual power ``sum_n ||sum_k D_k * X_k - s_n||^2``."""
    S = np.stack([np.asarray(s, dtype=np.float64) for s in signals])
    residual = reconstruct(X, dicts) - S
    return float(np.sum(residual * residual))


def objective(signals, X, dicts, reg: Regularizer):
    """Value of the regularized coding objective at X: half the
    residual power plus the active sparsity penalty."""
    rows = np.moveaxis(np.asarray(X, dtype=np.float64), 0, -1)
    if reg.kind is RegKind.L1:
        penalty = reg.lam * np.sum(np.abs(rows))
    elif reg.kind is RegKind.L21:
        penalty = reg.lam * np.sum(np.linalg.norm(rows, axis=-1))
    elif reg.kind is RegKind.LINF1:
        penalty = reg.lam * np.sum(np.max(np.abs(rows), axis=-1))
    else:
        penalty = reg.gamma1 * np.sum(np.abs(rows)) + reg.gamma2 * np.sum(
            np.linalg.norm(rows, axis=-1)
        )
    return 0.5 * approx_error(signals, X, dicts) + penalty
