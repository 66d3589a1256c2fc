"""Synthetic instance generation, oracle solutions and evaluation metrics.

Designs, signals and noise follow the benchmark recipes: Gaussian,
Rademacher-style sign, and row-subsampled Hadamard designs; four signal
families on a randomly chosen group support; observations perturbed by
normalized coefficient- and response-side noise.  Oracles include the
support-restricted least squares solution and an exhaustive-support
global minimizer of the group zero-norm objective for tiny instances.

All randomness flows through the counter-based Philox generator so that
instances are bit-reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, hadamard
from scipy.optimize import lsq_linear

from .groups import BoxConstraint, GroupStructure, group_norms


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


@dataclass
class Instance:
    A: np.ndarray
    b: np.ndarray
    g: GroupStructure
    x_true: np.ndarray | None = None
    support_true: np.ndarray | None = None  # sorted group ids
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def noise(self) -> np.ndarray:
        if self.x_true is None:
            raise ValueError("noise requires x_true")
        return self.b - self.A @ self.x_true


@dataclass
class OracleResult:
    x_ls: np.ndarray
    residual_noise: np.ndarray  # (1/n) A^T (A x_ls - b)
    correlated_noise: np.ndarray  # (1/n) A^T eps
    projected_noise: np.ndarray  # (A_S^T A_S)^{-1} A_S^T eps, on-support coords


class SingularDesignError(ValueError):
    pass


# ---------------------------------------------------------------------------
# generators


def gen_design(kind: str, n: int, p: int, seed: int) -> np.ndarray:
    """Design matrix of kind I (Gaussian), II (signs), or III (Hadamard rows)."""
    rng = make_rng(seed)
    if kind == "I":
        return rng.standard_normal((n, p))
    if kind == "II":
        A = np.sign(rng.random((n, p)) - 0.5)
        A[A == 0] = 1.0
        return A
    if kind == "III":
        if p & (p - 1) != 0 or p <= 0:
            raise ValueError("kind III requires p to be a power of two")
        if n > p:
            raise ValueError("kind III requires n <= p")
        H = hadamard(p).astype(float)
        picks = np.sort(rng.permutation(p)[:n])
        return H[picks, :]
    raise ValueError(f"unknown design kind {kind!r}")


def gen_signal(kind: str, g: GroupStructure, r_bar: int, alpha: float, seed: int):
    """True coefficients with exactly ``r_bar`` nonzero groups; returns (x, support)."""
    if r_bar > g.m:
        raise ValueError("r_bar cannot exceed the number of groups")
    rng = make_rng(seed)
    support = np.sort(rng.permutation(g.m)[:r_bar])
    x = np.zeros(g.p)
    if kind == "i":
        for i in support:
            x[g.groups[i]] = alpha * rng.standard_normal(g.groups[i].size)
    elif kind == "ii":
        for i in support:
            x[g.groups[i]] = alpha * rng.random(g.groups[i].size) - 0.5
    elif kind == "iii":
        for i in support:
            sgn = np.sign(rng.standard_normal(g.groups[i].size))
            sgn[sgn == 0] = 1.0
            x[g.groups[i]] = alpha * sgn
    elif kind == "iv":
        # first half of the selected groups negative, the rest positive,
        # magnitude 1e5 / sqrt(group id) on the all-ones pattern
        half = r_bar // 2
        for pos, i in enumerate(support):
            mag = 1e5 / np.sqrt(i + 1)
            x[g.groups[i]] = mag if pos >= half else -mag
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    # the draw may produce an exactly-zero group with probability 0; regenerate
    # rather than silently break the support invariant
    for i in support:
        if np.linalg.norm(x[g.groups[i]]) == 0.0:
            x[g.groups[i][0]] = alpha if alpha != 0 else 1.0
    return x, support


def gen_observations(A, x_bar, theta1: float, theta2: float, seed: int) -> np.ndarray:
    """Response ``b = A(x + t1 e1/||e1||) + t2 e2/||e2||`` with standard-normal noise."""
    if theta1 < 0 or theta2 < 0:
        raise ValueError("noise scales must be nonnegative")
    A = np.asarray(A, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    n, p = A.shape
    rng = make_rng(seed)
    e_coef = rng.standard_normal(p)
    e_resp = rng.standard_normal(n)
    x_pert = x_bar
    if theta1 > 0:
        x_pert = x_bar + theta1 * e_coef / np.linalg.norm(e_coef)
    b = A @ x_pert
    if theta2 > 0:
        b = b + theta2 * e_resp / np.linalg.norm(e_resp)
    return b


def make_instance(design: str, signal: str, n: int, p: int, m: int, r_bar: int,
                  alpha: float, theta1: float, theta2: float, seed: int,
                  g: GroupStructure | None = None) -> Instance:
    """One fully assembled synthetic instance with derived sub-seeds."""
    from .groups import contiguous_groups

    g = g or contiguous_groups(p, m)
    A = gen_design(design, n, p, seed)
    x_bar, support = gen_signal(signal, g, r_bar, alpha, seed + 1)
    b = gen_observations(A, x_bar, theta1, theta2, seed + 2)
    meta = {
        "design": design,
        "signal": signal,
        "n": n,
        "p": p,
        "m": m,
        "r_bar": r_bar,
        "alpha": alpha,
        "theta1": theta1,
        "theta2": theta2,
        "rng": "philox",
    }
    return Instance(A=A, b=b, g=g, x_true=x_bar, support_true=support, seed=seed, meta=meta)


def default_box(x_true) -> BoxConstraint:
    """The synthetic-benchmark radius ``R = 1000 ||x_true||_inf``."""
    scale = float(np.max(np.abs(x_true)))
    if scale == 0:
        raise ValueError("x_true is zero")
    return BoxConstraint(R=1000.0 * scale)


# ---------------------------------------------------------------------------
# oracles


def oracle_ls(inst: Instance) -> OracleResult:
    """Least squares restricted to the true group support.

    Requires the restricted design to have full column rank; off-support
    coordinates of the solution are exactly zero.
    """
    if inst.support_true is None:
        raise ValueError("oracle_ls requires a known support")
    cols = np.concatenate([inst.g.groups[i] for i in inst.support_true])
    A_s = inst.A[:, cols]
    if np.linalg.matrix_rank(A_s) < A_s.shape[1]:
        raise SingularDesignError("restricted design is rank deficient")
    x_s, *_ = np.linalg.lstsq(A_s, inst.b, rcond=None)
    x_ls = np.zeros(inst.g.p)
    x_ls[cols] = x_s
    n = inst.A.shape[0]
    residual_noise = inst.A.T @ (inst.A @ x_ls - inst.b) / n
    eps = inst.noise
    correlated = inst.A.T @ eps / n
    projected = np.linalg.solve(A_s.T @ A_s, A_s.T @ eps)
    proj_full = np.zeros(inst.g.p)
    proj_full[cols] = projected
    return OracleResult(x_ls, residual_noise, correlated, proj_full)


def _box_restricted_ls(A_s, b, R: float):
    """Exact bounded least squares on the selected columns (active-set BVLS)."""
    if A_s.shape[1] == 0:
        return np.zeros(0)
    res = lsq_linear(A_s, b, bounds=(-R, R), method="bvls", tol=1e-14)
    return res.x


def brute_force_zero_norm(inst: Instance, nu: float, box: BoxConstraint):
    """Certified global minimizer of the group zero-norm objective.

    Enumerates all group supports (requires m <= 16) and solves the
    box-constrained least squares on each; returns the minimizer of
    ``(nu/2n) ||Ax - b||^2 + #nonzero groups`` and its objective.
    """
    m = inst.g.m
    if m > 16:
        raise ValueError("support enumeration refused for m > 16")
    n = inst.A.shape[0]
    best_obj = np.inf
    best_x = np.zeros(inst.g.p)
    for mask in range(2**m):
        sel = [i for i in range(m) if mask >> i & 1]
        x = np.zeros(inst.g.p)
        if sel:
            cols = np.concatenate([inst.g.groups[i] for i in sel])
            x[cols] = _box_restricted_ls(inst.A[:, cols], inst.b, box.R)
        r = inst.A @ x - inst.b
        eff = int(np.count_nonzero(group_norms(x, inst.g) > 1e-10))
        obj = nu / (2.0 * n) * (r @ r) + eff
        if obj < best_obj:
            best_obj = obj
            best_x = x
    return best_x, float(best_obj)


def gsparse_objective(x, inst: Instance, nu: float, zero_tol: float = 1e-6) -> float:
    """The group zero-norm objective of an arbitrary point, with thresholded counting."""
    r = inst.A @ x - inst.b
    n = inst.A.shape[0]
    return float(nu / (2.0 * n) * (r @ r) + np.count_nonzero(group_norms(x, inst.g) > zero_tol))


# ---------------------------------------------------------------------------
# multi-task assembly and metrics


def assemble_multitask(tasks) -> Instance:
    """Block-diagonal design from per-task (matrix, response) pairs, one group per task."""
    tasks = list(tasks)
    if not tasks:
        raise ValueError("need at least one task")
    blocks, responses = [], []
    for A_k, y_k in tasks:
        A_k = np.atleast_2d(np.asarray(A_k, dtype=float))
        y_k = np.asarray(y_k, dtype=float)
        if A_k.shape[0] != y_k.shape[0]:
            raise ValueError("task design and response sizes disagree")
        blocks.append(A_k)
        responses.append(y_k)
    A = block_diag(*blocks)
    b = np.concatenate(responses)
    sizes = [blk.shape[1] for blk in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    g = GroupStructure(int(offsets[-1]), [np.arange(offsets[i], offsets[i + 1]) for i in range(len(sizes))])
    return Instance(A=A, b=b, g=g, meta={"multitask": True, "tasks": len(tasks)})


def metrics(x_out, inst: Instance, zero_tol: float = 1e-6) -> dict:
    """Recovery metrics of an estimate against the instance ground truth."""
    x_out = np.asarray(x_out, dtype=float)
    if inst.x_true is None or not np.any(inst.x_true):
        raise ValueError("relative error undefined without a nonzero x_true")
    relerr = float(np.linalg.norm(x_out - inst.x_true) / np.linalg.norm(inst.x_true))
    norms = group_norms(x_out, inst.g)
    found = set(np.flatnonzero(norms > zero_tol).tolist())
    truth = set(np.asarray(inst.support_true).tolist())
    tp = len(found & truth)
    return {
        "relerr": relerr,
        "group_sparsity": len(found),
        "support_precision": tp / len(found) if found else 1.0,
        "support_recall": tp / len(truth) if truth else 1.0,
        "exact_support": found == truth,
    }
