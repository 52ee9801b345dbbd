"""Soft-margin kernel SVM trained by pairwise dual coordinate optimization.

The binary trainer maximizes the standard SVM dual

    W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)

subject to 0 <= alpha_i <= C and sum(alpha_i y_i) = 0, by repeatedly
solving the two-variable subproblem for the maximal-KKT-violating pair
(the classic SMO scheme).  Optimization stops when the worst violation
falls below ``tol``; the bias is the midpoint of the optimal-bias
interval, which makes the standard KKT certificate hold at ``tol``.

Multiclass classification is one-vs-rest over the binary trainer, and
model selection is a plain grid search over (kernel, C) scored on a
held-out validation set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import LabeledSet

KERNEL_KINDS = ("linear", "poly2", "poly3", "poly4", "rbf")
_POLY_DEGREE = {"poly2": 2, "poly3": 3, "poly4": 4}

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family member.

    ``gamma=None`` means "resolve at fit time" to 1 / (n_features * var(X)),
    the scale heuristic.  ``coef0`` only matters for polynomial kernels.
    """

    kind: str
    gamma: float | None = None
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind: {self.kind!r}")
        if self.gamma is not None and not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive: {self.gamma}")

    def rank(self) -> int:
        """Simplicity order used for tie-breaking: linear < poly < rbf."""
        return KERNEL_KINDS.index(self.kind)


def resolve_gamma(spec: KernelSpec, x: np.ndarray) -> KernelSpec:
    """Fill in a concrete gamma from the data if the spec left it open."""
    if spec.gamma is not None:
        return spec
    var = float(x.var())
    gamma = 1.0 / (x.shape[1] * var) if var > 1e-300 else 1.0
    return KernelSpec(spec.kind, gamma, spec.coef0)


def gram(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel matrix K[i, j] = k(a_i, b_j).  Requires a resolved gamma."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.kind == "linear":
        return a @ b.T
    if spec.gamma is None:
        raise ValueError("gamma unresolved: call resolve_gamma first")
    if spec.kind in _POLY_DEGREE:
        return (spec.gamma * (a @ b.T) + spec.coef0) ** _POLY_DEGREE[spec.kind]
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-spec.gamma * np.clip(sq, 0.0, None))


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Single kernel evaluation k(a, b)."""
    return float(gram(spec, np.atleast_2d(a), np.atleast_2d(b))[0, 0])


@dataclass(eq=False)
class SvmModel:
    """A trained binary classifier.

    ``classes`` maps decision sign to labels: decision >= 0 predicts
    ``classes[1]`` (the larger label), decision < 0 predicts
    ``classes[0]``.
    """

    kernel: KernelSpec
    c: float
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i at the support vectors
    bias: float
    classes: tuple[int, int]
    converged: bool
    n_iter: int
    dual_objective: float
    tol: float
    sv_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def to_dict(self) -> dict:
        return {
            "kind": "binary-svm",
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma,
                       "coef0": self.kernel.coef0},
            "c": self.c,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "bias": self.bias,
            "classes": list(self.classes),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "dual_objective": self.dual_objective,
            "tol": self.tol,
            "sv_indices": self.sv_indices.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "SvmModel":
        if d.get("kind") != "binary-svm":
            raise ValueError(f"not a binary SVM payload: {d.get('kind')!r}")
        return SvmModel(
            kernel=KernelSpec(d["kernel"]["kind"], d["kernel"]["gamma"], d["kernel"]["coef0"]),
            c=d["c"],
            support_vectors=np.array(d["support_vectors"], dtype=float).reshape(
                len(d["support_vectors"]), -1),
            dual_coefs=np.array(d["dual_coefs"], dtype=float),
            bias=d["bias"],
            classes=tuple(d["classes"]),  # type: ignore[arg-type]
            converged=d["converged"],
            n_iter=d["n_iter"],
            dual_objective=d["dual_objective"],
            tol=d["tol"],
            sv_indices=np.array(d.get("sv_indices", []), dtype=int),
        )


def _smo(kmat: np.ndarray, y: np.ndarray, c: float, tol: float,
         max_iter: int) -> tuple[np.ndarray, float, bool, int, np.ndarray]:
    """Core pairwise optimizer on a precomputed Gram matrix.

    ``max_iter`` caps the number of pair updates (outer-loop iterations);
    hitting the cap reports non-convergence rather than raising.

    Returns (alpha, bias, converged, n_updates, u) where u_i is the
    biasless decision value sum_j alpha_j y_j K_ij.
    """
    n = len(y)
    alpha = np.zeros(n)
    u = np.zeros(n)
    bound_eps = 1e-10 * max(1.0, c)
    updates = 0
    stalls = 0
    converged = False
    pos = y > 0.0
    # Dual objective, tracked incrementally in O(1) per update.  Near the
    # stopping certificate a healthy kernel gains at least about
    # n * tol^2 / (2 * eta) per sweep of n updates; a sweep that gains
    # less than 1e-4 * n * tol^2 means the curvature is so large (for
    # example a polynomial kernel whose auto-gamma exploded on a
    # near-constant feature block) that no reasonable budget can reach
    # tol, so the optimizer bails out and reports non-convergence.
    objective = 0.0
    check_mark = n
    objective_at_mark = 0.0
    rate_floor = 1e-4 * n * tol * tol

    # Membership in the I_up / I_low index sets only changes at the two
    # points touched per update, so the masks are kept incrementally.
    at_upper = alpha >= c - bound_eps
    at_lower = alpha <= bound_eps
    up_mask = (pos & ~at_upper) | (~pos & ~at_lower)
    low_mask = (~pos & ~at_upper) | (pos & ~at_lower)
    neg = ~pos

    while updates < max_iter:
        v = y - u  # -E_i; see module docstring
        v_up = np.where(up_mask, v, -np.inf)
        v_low = np.where(low_mask, v, np.inf)
        i = int(np.argmax(v_up))
        j = int(np.argmin(v_low))
        lo_b, hi_b = v_up[i], v_low[j]
        if not np.isfinite(lo_b) or not np.isfinite(hi_b):
            converged = True  # one of the index sets is empty
            break
        if lo_b - hi_b < tol:
            converged = True
            break

        yi, yj = y[i], y[j]
        kii, kjj, kij = kmat[i, i], kmat[j, j], kmat[i, j]
        eta = max(kii + kjj - 2.0 * kij, 1e-12)
        # E_i - E_j = v[j] - v[i]
        aj_old, ai_old = alpha[j], alpha[i]
        aj_new = aj_old + yj * (hi_b - lo_b) / eta
        if yi != yj:
            lo = max(0.0, aj_old - ai_old)
            hi = min(c, c + aj_old - ai_old)
        else:
            lo = max(0.0, ai_old + aj_old - c)
            hi = min(c, ai_old + aj_old)
        aj_new = min(max(aj_new, lo), hi)
        ai_new = ai_old + yi * yj * (aj_old - aj_new)
        d_i, d_j = ai_new - ai_old, aj_new - aj_old
        if abs(d_i) < 1e-14 and abs(d_j) < 1e-14:
            stalls += 1
            if stalls > n:
                break
            updates += 1
            continue
        stalls = 0
        alpha[i], alpha[j] = ai_new, aj_new
        for t, a_t in ((i, ai_new), (j, aj_new)):
            t_upper = a_t >= c - bound_eps
            t_lower = a_t <= bound_eps
            up_mask[t] = (pos[t] and not t_upper) or (neg[t] and not t_lower)
            low_mask[t] = (neg[t] and not t_upper) or (pos[t] and not t_lower)
        gi, gj = d_i * yi, d_j * yj
        objective += (d_i + d_j) - gi * u[i] - gj * u[j] \
            - 0.5 * (gi * gi * kii + gj * gj * kjj) - gi * gj * kij
        np.add(u, gi * kmat[i], out=u)
        np.add(u, gj * kmat[j], out=u)
        updates += 1
        if updates >= check_mark:
            if objective - objective_at_mark < rate_floor:
                break
            objective_at_mark = objective
            check_mark = updates + n

    v = y - u
    at_upper = alpha >= c - bound_eps
    at_lower = alpha <= bound_eps
    up_mask = (pos & ~at_upper) | (~pos & ~at_lower)
    low_mask = (~pos & ~at_upper) | (pos & ~at_lower)
    lo_b = np.max(v[up_mask]) if up_mask.any() else -np.inf
    hi_b = np.min(v[low_mask]) if low_mask.any() else np.inf
    if math.isfinite(lo_b) and math.isfinite(hi_b):
        bias = 0.5 * (lo_b + hi_b)
    elif math.isfinite(lo_b):
        bias = float(lo_b)
    elif math.isfinite(hi_b):
        bias = float(hi_b)
    else:
        bias = 0.0
    return alpha, float(bias), converged, updates, u


def train_binary(data: LabeledSet, c: float, kernel: KernelSpec,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 _gram: np.ndarray | None = None) -> SvmModel:
    """Fit a binary SVM.  ``data.y`` must contain exactly two labels.

    The larger label maps to the +1 side of the decision function.
    ``_gram`` optionally reuses a precomputed Gram matrix for the resolved
    kernel (model selection shares one across the C grid).
    """
    if not c > 0.0:
        raise ValueError(f"C must be positive: {c}")
    if not tol > 0.0:
        raise ValueError(f"tol must be positive: {tol}")
    labels = np.unique(data.y)
    if len(labels) != 2:
        raise ValueError(f"degenerate labels: need exactly 2 classes, got {labels.tolist()}")
    kernel = resolve_gamma(kernel, data.x)
    y = np.where(data.y == labels[1], 1.0, -1.0)
    kmat = _gram if _gram is not None else gram(kernel, data.x, data.x)
    alpha, bias, converged, n_iter, u = _smo(kmat, y, float(c), tol, max_iter)

    sv_eps = 1e-10 * max(1.0, c)
    idx = np.nonzero(alpha > sv_eps)[0]
    dual_obj = float(alpha.sum() - 0.5 * (alpha * y) @ u)
    return SvmModel(
        kernel=kernel,
        c=float(c),
        support_vectors=data.x[idx].copy(),
        dual_coefs=(alpha[idx] * y[idx]),
        bias=bias,
        classes=(int(labels[0]), int(labels[1])),
        converged=converged,
        n_iter=n_iter,
        dual_objective=dual_obj,
        tol=tol,
        sv_indices=idx,
    )


def decision_function(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Signed decision values for rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if len(model.dual_coefs) == 0:
        return np.full(len(x), model.bias)
    return model.dual_coefs @ gram(model.kernel, model.support_vectors, x) + model.bias


def predict(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Predicted labels for rows of ``x``; ties go to the larger class."""
    values = decision_function(model, x)
    return np.where(values >= 0.0, model.classes[1], model.classes[0])


def predict_one(model: SvmModel, x: np.ndarray) -> tuple[int, float]:
    """(label, decision value) for a single feature vector."""
    value = float(decision_function(model, x)[0])
    return (model.classes[1] if value >= 0.0 else model.classes[0], value)


def kkt_violations(model: SvmModel, data: LabeledSet) -> np.ndarray:
    """Per-point KKT certificate slack on the training set (<= tol if optimal).

    For alpha=0 points the violation is max(0, 1 - y f); for free support
    vectors |y f - 1|; for alpha=C points max(0, y f - 1).  ``data`` must
    be the exact training set of ``model`` (``sv_indices`` refer into it).
    """
    labels = np.unique(data.y)
    if len(labels) != 2:
        raise ValueError("degenerate labels")
    y = np.where(data.y == labels[1], 1.0, -1.0)
    f = decision_function(model, data.x)
    yf = y * f
    alpha = np.zeros(len(data.x))
    alpha[model.sv_indices] = np.abs(model.dual_coefs)
    bound_eps = 1e-8 * max(1.0, model.c)
    out = np.zeros(len(data.x))
    free = (alpha > bound_eps) & (alpha < model.c - bound_eps)
    lower = alpha <= bound_eps
    upper = alpha >= model.c - bound_eps
    out[lower] = np.clip(1.0 - yf[lower], 0.0, None)
    out[free] = np.abs(yf[free] - 1.0)
    out[upper] = np.clip(yf[upper] - 1.0, 0.0, None)
    return out


# ---------------------------------------------------------------------------
# One-vs-rest multiclass.
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class OvrModel:
    """One-vs-rest ensemble; prediction is the argmax decision value."""

    classes: tuple[int, ...]
    models: tuple[SvmModel, ...]

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.models)

    def to_dict(self) -> dict:
        return {
            "kind": "ovr-svm",
            "classes": list(self.classes),
            "models": [m.to_dict() for m in self.models],
        }

    @staticmethod
    def from_dict(d: dict) -> "OvrModel":
        if d.get("kind") != "ovr-svm":
            raise ValueError(f"not a one-vs-rest payload: {d.get('kind')!r}")
        return OvrModel(tuple(d["classes"]), tuple(SvmModel.from_dict(m) for m in d["models"]))


def train_ovr(data: LabeledSet, c: float, kernel: KernelSpec,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              _gram: np.ndarray | None = None) -> OvrModel:
    """One binary model per class against the rest (classes ascending)."""
    classes = tuple(int(v) for v in np.unique(data.y))
    if len(classes) < 2:
        raise ValueError(f"degenerate labels: need >= 2 classes, got {list(classes)}")
    kernel = resolve_gamma(kernel, data.x)
    models = []
    for cls in classes:
        marked = LabeledSet(data.x, np.where(data.y == cls, 1, -1))
        models.append(train_binary(marked, c, kernel, tol, max_iter, _gram=_gram))
    return OvrModel(classes, tuple(models))


def ovr_decision_matrix(model: OvrModel, x: np.ndarray) -> np.ndarray:
    """(n_points, n_classes) decision values."""
    return np.stack([decision_function(m, x) for m in model.models], axis=1)


def predict_ovr(model: OvrModel, x: np.ndarray) -> np.ndarray:
    """Argmax-of-decision-values prediction; ties go to the lowest class."""
    values = ovr_decision_matrix(model, x)
    picks = np.argmax(values, axis=1)  # first max wins; classes are ascending
    return np.array(model.classes)[picks]


def predict_any(model, x: np.ndarray) -> np.ndarray:
    if isinstance(model, OvrModel):
        return predict_ovr(model, x)
    return predict(model, x)


# ---------------------------------------------------------------------------
# Evaluation protocol helpers.
# ---------------------------------------------------------------------------


def accuracy(predicted: Sequence[int], actual: Sequence[int]) -> float:
    """Fraction of positions where the label sequences agree."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ValueError("empty sample: no predictions to score")
    return float(np.mean(predicted == actual))


def split_indices(n: int, fractions: tuple[float, float, float],
                  seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/validation/test index arrays by seeded permutation."""
    if n < 5:
        raise ValueError(f"too few samples to split: {n}")
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positives summing to 1: {fractions}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(max(n_train, 1), n - 2)
    n_val = min(max(n_val, 1), n - n_train - 1)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split(data: LabeledSet, fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
          seed: int = 0) -> tuple[LabeledSet, LabeledSet, LabeledSet]:
    """Random train/validation/test partition of a labeled set."""
    tr, va, te = split_indices(len(data), fractions, seed)
    return (
        LabeledSet(data.x[tr], data.y[tr]),
        LabeledSet(data.x[va], data.y[va]),
        LabeledSet(data.x[te], data.y[te]),
    )


@dataclass(eq=False)
class SelectionResult:
    """Winner of a (kernel, C) grid search plus the full score table."""

    model: object  # SvmModel or OvrModel
    kernel: KernelSpec
    c: float
    val_accuracy: float
    converged: bool
    rows: list[dict]


def select_model(train: LabeledSet, val: LabeledSet,
                 c_grid: Sequence[float] = DEFAULT_C_GRID,
                 kernels: Sequence[KernelSpec] | None = None,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SelectionResult:
    """Grid search over (kernel, C) scored by validation accuracy.

    Ties prefer the simpler kernel (linear < poly2 < poly3 < poly4 < rbf)
    and then the smaller C.  Binary problems use the binary trainer; more
    classes use one-vs-rest.
    """
    if kernels is None:
        kernels = [KernelSpec(kind) for kind in KERNEL_KINDS]
    if not c_grid or not kernels:
        raise ValueError("empty model grid")
    n_classes = len(np.unique(train.y))
    trainer = train_binary if n_classes == 2 else train_ovr

    best = None
    best_key = None
    rows = []
    for spec in sorted(kernels, key=KernelSpec.rank):
        resolved = resolve_gamma(spec, train.x)
        # One Gram per kernel, shared across the C grid (and OvR classes);
        # memory is 8 * n_train^2 bytes per kernel, freed between kernels.
        kmat = gram(resolved, train.x, train.x)
        for c in sorted(c_grid):
            model = trainer(train, c, resolved, tol, max_iter, _gram=kmat)
            val_acc = accuracy(predict_any(model, val.x), val.y)
            converged = model.converged if isinstance(model, OvrModel) else model.converged
            rows.append({
                "kernel": resolved.kind, "gamma": resolved.gamma, "coef0": resolved.coef0,
                "c": c, "val_accuracy": val_acc, "converged": converged,
            })
            key = (-val_acc, resolved.rank(), c)
            if best_key is None or key < best_key:
                best_key = key
                best = SelectionResult(model, resolved, float(c), val_acc, converged, rows)
    assert best is not None
    best.rows = rows
    return best


def save_model(model, path: str | Path) -> Path:
    """Serialize a model (binary or one-vs-rest) as self-describing JSON."""
    path = Path(path)
    path.write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def load_model(path: str | Path):
    d = json.loads(Path(path).read_text())
    if d.get("kind") == "binary-svm":
        return SvmModel.from_dict(d)
    if d.get("kind") == "ovr-svm":
        return OvrModel.from_dict(d)
    raise ValueError(f"unknown model payload: {d.get('kind')!r}")
