"""Convex subproblems: the per-combiner SOCP feasibility step and the SDP step.

Both are posed in real arithmetic for cvxopt's conic solver (a primal-dual
interior-point method with Nesterov-Todd scaling). Complex Hermitian matrices
enter through the block map ``[[Re X, -Im X], [Im X, Re X]]``; for Hermitian
``F`` and ``X``, ``Tr(F X) = 1/2 Tr(emb(F) emb(X))``.

Every returned solution is re-checked by a pure re-evaluation of the
constraints (``check_socp`` / ``check_sdp``) before it is labelled optimal.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cvxopt
import cvxopt.solvers
import numpy as np

log = logging.getLogger(__name__)

CHECK_TOL = 1e-7
SINR_MARGIN = 1e-6

SOLVER_OPTIONS = {
    "show_progress": False,
    "maxiters": 100,
}
# interior-point tolerances tried in order until a solution passes the checker
TOL_LADDER = (1e-9, 1e-8, 1e-7)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_TROUBLE = "NumericalTrouble"


class NumericalTrouble(RuntimeError):
    """A conic solve failed in a way that is not a clean infeasibility verdict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ConicStatus:
    status: Status
    objective: float = float("nan")
    solution: np.ndarray | None = None
    violation: float = float("nan")
    iterations: int = 0
    solver_status: str = ""
    dual_objective: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# --------------------------------------------------------------------------
# complex <-> real embedding


def embed(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    re, im = X.real, X.imag
    return np.block([[re, -im], [im, re]])


def unembed(Y: np.ndarray) -> np.ndarray:
    """Project a real 2N x 2N matrix onto the embedded-complex structure and map back."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 2
    re = 0.5 * (Y[:n, :n] + Y[n:, n:])
    im = 0.5 * (Y[n:, :n] - Y[:n, n:])
    return re + 1j * im


def _to_cvx(a: np.ndarray) -> cvxopt.matrix:
    return cvxopt.matrix(np.asarray(a, dtype=float))


def _run_conelp(c, G, h, dims, A=None, b=None, tol=TOL_LADDER[0]) -> dict:
    args = [_to_cvx(c), _to_cvx(G), _to_cvx(h), dims]
    if A is not None and A.shape[0]:
        args += [_to_cvx(A), _to_cvx(b)]
    opts = dict(SOLVER_OPTIONS, abstol=tol, reltol=tol, feastol=tol)
    try:
        return cvxopt.solvers.conelp(*args, options=opts)
    except (ArithmeticError, ValueError) as exc:
        # cvxopt signals singular KKT systems this way
        return {"status": "error", "x": None, "z": None, "iterations": 0, "message": str(exc)}


# --------------------------------------------------------------------------
# SOCP step


@dataclass
class SocpStepSpec:
    """Feasibility SOCP for fixed combiners at a given delta.

    ``thresholds[j]`` is ``delta * rho_bar_j``. Constraints:
    ``Im(g_j^H H_j w) = 0``,
    ``Re(g_j^H H_j w) >= sqrt(threshold_j) * ||[sigma ||g_j||, g_j^H H~_j w]||``,
    ``||w||^2 <= power_budget`` and optionally ``|w_n|^2 <= tone_cap``.
    """

    combiners: np.ndarray  # K x N
    signal: np.ndarray  # K x N diagonals of H_j
    interference: np.ndarray  # K x N diagonals of H~_j
    thresholds: np.ndarray
    noise_var: float
    power_budget: float  # 2P
    tone_cap: float | None = None  # 2 * psd_limit

    def __post_init__(self):
        self.combiners = np.atleast_2d(np.asarray(self.combiners, dtype=complex))
        self.signal = np.atleast_2d(np.asarray(self.signal, dtype=complex))
        self.interference = np.atleast_2d(np.asarray(self.interference, dtype=complex))
        self.thresholds = np.asarray(self.thresholds, dtype=float).ravel()
        if np.any(self.thresholds < 0):
            raise ValueError("SINR thresholds must be nonnegative")

    @classmethod
    def from_channel(cls, channel, combiners, thresholds, noise_var, power_budget, tone_cap=None):
        k = channel.n_tags
        return cls(
            combiners=np.asarray(combiners),
            signal=channel.backscatter,
            interference=np.array([channel.interference_diag(j) for j in range(k)]),
            thresholds=thresholds,
            noise_var=noise_var,
            power_budget=power_budget,
            tone_cap=tone_cap,
        )


def check_socp(spec: SocpStepSpec, w: np.ndarray) -> float:
    """Largest scaled constraint violation of ``w`` (0 when feasible)."""
    w = np.asarray(w, dtype=complex)
    worst = 0.0
    for j in range(spec.thresholds.size):
        g = spec.combiners[j]
        s = np.vdot(g, spec.signal[j] * w)
        i = np.vdot(g, spec.interference[j] * w)
        mag = abs(s)
        worst = max(worst, abs(s.imag) / max(mag, 1e-300) if mag > 0 else 0.0)
        need = spec.thresholds[j] * (spec.noise_var * np.vdot(g, g).real + abs(i) ** 2)
        if need > 0:
            have = max(s.real, 0.0) ** 2
            worst = max(worst, (need - have) / need)
        elif s.real < 0:
            worst = max(worst, -s.real / max(mag, 1e-300))
    pw = np.vdot(w, w).real
    worst = max(worst, (pw - spec.power_budget) / spec.power_budget)
    if not np.all(np.isfinite(w)):
        return float("inf")
    if spec.tone_cap is not None:
        worst = max(worst, float(np.max(np.abs(w) ** 2) - spec.tone_cap) / spec.tone_cap)
    return max(worst, 0.0)


def _ladder(solve_once) -> ConicStatus:
    out = None
    for tol in TOL_LADDER:
        out = solve_once(tol)
        if out.status in (Status.OPTIMAL, Status.INFEASIBLE):
            return out
        log.debug("retrying conic solve at tol %.0e after %s (%s)", tol * 10, out.status.value, out.solver_status)
    return out


def solve_socp_step(spec: SocpStepSpec) -> ConicStatus:
    """Minimum-norm point of the SOCP feasibility set, or an infeasibility verdict."""
    return _ladder(lambda tol: _solve_socp_once(spec, tol))


def _solve_socp_once(spec: SocpStepSpec, tol: float) -> ConicStatus:
    k, n = spec.combiners.shape
    scale = np.sqrt(spec.power_budget)  # w = scale * x
    nv = 2 * n + 1  # [Re w, Im w, tau]

    def real_map(u):
        # rows giving Re(u . w) and Im(u . w) in terms of [Re w, Im w]
        return np.concatenate([u.real, -u.imag]), np.concatenate([u.imag, u.real])

    G_blocks, h_blocks, q_dims = [], [], []
    A_rows, b_rows = [], []
    sigma = np.sqrt(spec.noise_var)
    for j in range(k):
        g = spec.combiners[j]
        u = np.conj(g) * spec.signal[j] * scale
        v = np.conj(g) * spec.interference[j] * scale
        rt = np.sqrt(spec.thresholds[j])
        re_u, im_u = real_map(u)
        re_v, im_v = real_map(v)
        gnorm = np.linalg.norm(g)
        c = max(np.linalg.norm(u), rt * np.linalg.norm(v), rt * sigma * gnorm, 1e-300)
        rows = np.zeros((4, nv))
        rows[0, : 2 * n] = re_u
        rows[2, : 2 * n] = rt * re_v
        rows[3, : 2 * n] = rt * im_v
        G_blocks.append(-rows / c)
        h_blocks.append(np.array([0.0, rt * sigma * gnorm, 0.0, 0.0]) / c)
        q_dims.append(4)
        if np.linalg.norm(u) > 0:
            nu = np.linalg.norm(im_u)
            A_rows.append(np.concatenate([im_u, [0.0]]) / nu)
            b_rows.append(0.0)
    # ||x|| <= tau and ||x|| <= 1
    cone = np.zeros((nv, nv))
    cone[0, -1] = -1.0
    cone[1:, : 2 * n] = -np.eye(2 * n)
    G_blocks.append(cone)
    h_blocks.append(np.zeros(nv))
    q_dims.append(nv)
    cone = np.zeros((nv, nv))
    cone[1:, : 2 * n] = -np.eye(2 * n)
    G_blocks.append(cone)
    h = np.zeros(nv)
    h[0] = 1.0
    h_blocks.append(h)
    q_dims.append(nv)
    if spec.tone_cap is not None:
        cap = np.sqrt(spec.tone_cap / spec.power_budget)
        for t in range(n):
            rows = np.zeros((3, nv))
            rows[1, t] = -1.0
            rows[2, n + t] = -1.0
            G_blocks.append(rows)
            h_blocks.append(np.array([cap, 0.0, 0.0]))
            q_dims.append(3)

    c_obj = np.zeros(nv)
    c_obj[-1] = 1.0
    G = np.vstack(G_blocks)
    h = np.concatenate(h_blocks)
    A = np.array(A_rows) if A_rows else None
    b = np.array(b_rows) if A_rows else None
    if A is not None:
        # drop linearly dependent equality rows (cvxopt needs full row rank)
        keep = _independent_rows(A)
        A, b = A[keep], b[keep]
    res = _run_conelp(c_obj, G, h, {"l": 0, "q": q_dims, "s": []}, A, b, tol=tol)
    return _finish_socp(spec, res, scale, n)


def _independent_rows(A: np.ndarray, tol: float = 1e-9) -> list[int]:
    keep: list[int] = []
    for i in range(A.shape[0]):
        trial = A[keep + [i]]
        if np.linalg.matrix_rank(trial, tol=tol) == len(keep) + 1:
            keep.append(i)
    return keep


def _finish_socp(spec, res, scale, n) -> ConicStatus:
    st = res["status"]
    iters = int(res.get("iterations", 0) or 0)
    if st == "primal infeasible":
        return ConicStatus(Status.INFEASIBLE, solver_status=st, iterations=iters)
    if res.get("x") is None:
        return ConicStatus(Status.NUMERICAL_TROUBLE, solver_status=st, iterations=iters)
    x = np.array(res["x"]).ravel()
    if not np.all(np.isfinite(x)):
        return ConicStatus(Status.NUMERICAL_TROUBLE, solver_status=st, iterations=iters)
    w = scale * (x[:n] + 1j * x[n : 2 * n])
    viol = check_socp(spec, w)
    out = ConicStatus(
        Status.OPTIMAL,
        objective=float(np.vdot(w, w).real),
        solution=w,
        violation=viol,
        iterations=iters,
        solver_status=st,
    )
    if st == "optimal" and viol <= CHECK_TOL:
        return out
    if viol <= CHECK_TOL:
        log.debug("SOCP solver status %r but solution passes the checker", st)
        return out
    if st == "optimal":
        out.status = Status.NUMERICAL_TROUBLE
    elif iters >= SOLVER_OPTIONS["maxiters"]:
        out.status = Status.MAX_ITER
    elif st in ("dual infeasible",):
        out.status = Status.NUMERICAL_TROUBLE
    else:
        out.status = Status.NUMERICAL_TROUBLE
    return out


# --------------------------------------------------------------------------
# SDP step


@dataclass
class SdpStepSpec:
    """``min Tr(objective X) + offset`` over Hermitian PSD X subject to

    ``Tr(signal_j X) >= target_j * (noise_var * ||g_j||^2 + Tr(interf_j X))``,
    ``Tr(X) <= power_budget`` and optionally ``diag(X) <= diag_cap``.
    """

    objective: np.ndarray
    signal: list  # G_j = H_j^H g_j g_j^H H_j
    interf: list  # G~_j = H~_j^H g_j g_j^H H~_j
    targets: np.ndarray
    noise_var: float
    power_budget: float
    offset: float = 0.0
    combiner_norms: np.ndarray | None = None
    diag_cap: float | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=complex)
        if np.linalg.norm(self.objective - self.objective.conj().T) > 1e-12 * max(
            np.linalg.norm(self.objective), 1e-300
        ):
            raise ValueError("objective matrix must be Hermitian")
        self.objective = 0.5 * (self.objective + self.objective.conj().T)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.combiner_norms is None:
            self.combiner_norms = np.ones(self.targets.size)

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    def constraint_rows(self, margin: float = 0.0):
        """Constraints as ``Tr(F_i X) >= b_i`` (power and caps negated).

        ``margin`` inflates the SINR targets by ``1 + margin``.
        """
        rows, rhs = [], []
        for j in range(self.targets.size):
            rho = self.targets[j] * (1.0 + margin)
            rows.append(self.signal[j] - rho * self.interf[j])
            rhs.append(rho * self.noise_var * self.combiner_norms[j] ** 2)
        rows.append(-np.eye(self.n))
        rhs.append(-self.power_budget)
        if self.diag_cap is not None:
            for t in range(self.n):
                e = np.zeros((self.n, self.n))
                e[t, t] = -1.0
                rows.append(e)
                rhs.append(-self.diag_cap)
        return rows, np.array(rhs)

    def value(self, X) -> float:
        return float(np.trace(self.objective @ X).real) + self.offset


def sinr_gram(channel, combiners):
    """``(G_j, G~_j)`` lists for given combiners."""
    sig, itf = [], []
    for j in range(channel.n_tags):
        a = np.conj(channel.signal_diag(j)) * combiners[j]
        b = np.conj(channel.interference_diag(j)) * combiners[j]
        sig.append(np.outer(a, np.conj(a)))
        itf.append(np.outer(b, np.conj(b)))
    return sig, itf


def check_sdp(spec: SdpStepSpec, X: np.ndarray) -> float:
    """Largest scaled violation among SINR, power, cap and PSD constraints."""
    X = np.asarray(X, dtype=complex)
    worst = 0.0
    for j in range(spec.targets.size):
        need = spec.targets[j] * (
            spec.noise_var * spec.combiner_norms[j] ** 2 + np.trace(spec.interf[j] @ X).real
        )
        have = np.trace(spec.signal[j] @ X).real
        if need > 0:
            worst = max(worst, (need - have) / need)
    tr = np.trace(X).real
    worst = max(worst, (tr - spec.power_budget) / spec.power_budget)
    if spec.diag_cap is not None:
        worst = max(worst, (np.max(np.diag(X).real) - spec.diag_cap) / spec.diag_cap)
    if not np.all(np.isfinite(X)):
        return float("inf")
    herm = np.linalg.norm(X - X.conj().T) / max(np.linalg.norm(X), 1e-300)
    worst = max(worst, herm)
    mineig = np.linalg.eigvalsh(0.5 * (X + X.conj().T))[0]
    worst = max(worst, -mineig / max(tr, 1e-300))
    return max(worst, 0.0)


def solve_sdp_step(spec: SdpStepSpec) -> ConicStatus:
    """Solve the SDP through its Lagrange dual in the constraint multipliers.

    With the constraints ``Tr(F_i X) >= b_i`` the dual is
    ``max b^T y  s.t.  A - sum_i y_i F_i  PSD, y >= 0``; cvxopt's dual variable
    for the matrix inequality is ``emb(X) / 2``.
    """
    return _ladder(lambda tol: _solve_sdp_once(spec, tol))


def _solve_sdp_once(spec: SdpStepSpec, tol: float) -> ConicStatus:
    n = spec.n
    p = spec.power_budget
    # interior-point residuals are relative to the row scale, which can leave a
    # tight SINR row short by about the solver tolerance; aim slightly higher
    rows, rhs = spec.constraint_rows(margin=SINR_MARGIN)
    # normalise: X = p * Xh, each row and the objective to unit Frobenius norm
    a_norm = np.linalg.norm(spec.objective)
    A_h = spec.objective / a_norm if a_norm > 0 else spec.objective
    f_norms = np.array([max(np.linalg.norm(F), 1e-300) for F in rows])
    F_h = [F / s for F, s in zip(rows, f_norms)]
    b_h = rhs / (p * f_norms)
    m = len(F_h)
    dim = 2 * n
    G_l = -np.eye(m)
    h_l = np.zeros(m)
    G_s = np.column_stack([embed(F).ravel(order="F") for F in F_h])
    h_s = embed(A_h).ravel(order="F")
    G = np.vstack([G_l, G_s])
    h = np.concatenate([h_l, h_s])
    c = -b_h
    res = _run_conelp(c, G, h, {"l": m, "q": [], "s": [dim]}, tol=tol)
    st = res["status"]
    iters = int(res.get("iterations", 0) or 0)
    if st == "dual infeasible":
        return ConicStatus(Status.INFEASIBLE, solver_status=st, iterations=iters)
    if res.get("z") is None:
        return ConicStatus(Status.NUMERICAL_TROUBLE, solver_status=st, iterations=iters)
    z = np.array(res["z"]).ravel()
    if not np.all(np.isfinite(z)):
        return ConicStatus(Status.NUMERICAL_TROUBLE, solver_status=st, iterations=iters)
    Z = z[m:].reshape(dim, dim, order="F")
    Z = 0.5 * (Z + Z.T)
    Xh = 2.0 * unembed(Z)
    X = p * 0.5 * (Xh + Xh.conj().T)
    y = np.array(res["x"]).ravel()
    dual = float(b_h @ y) * p * a_norm + spec.offset
    viol = check_sdp(spec, X)
    out = ConicStatus(
        Status.OPTIMAL,
        objective=spec.value(X),
        solution=X,
        violation=viol,
        iterations=iters,
        solver_status=st,
        dual_objective=dual,
    )
    if viol <= CHECK_TOL:
        return out
    if st == "primal infeasible":
        out.status = Status.NUMERICAL_TROUBLE
    elif iters >= SOLVER_OPTIONS["maxiters"]:
        out.status = Status.MAX_ITER
    else:
        out.status = Status.NUMERICAL_TROUBLE
    return out


# --------------------------------------------------------------------------
# problem dumps


def _mat_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return {"shape": list(M.shape), "real": M.real.ravel().tolist(), "imag": M.imag.ravel().tolist()}


def dump_socp(spec: SocpStepSpec, path: str | Path) -> None:
    doc = {
        "kind": "socp_step",
        "combiners": _mat_json(spec.combiners),
        "signal": _mat_json(spec.signal),
        "interference": _mat_json(spec.interference),
        "thresholds": spec.thresholds.tolist(),
        "noise_var": spec.noise_var,
        "power_budget": spec.power_budget,
        "tone_cap": spec.tone_cap,
    }
    Path(path).write_text(json.dumps(doc))


def dump_sdp(spec: SdpStepSpec, path: str | Path) -> None:
    doc = {
        "kind": "sdp_step",
        "objective": _mat_json(spec.objective),
        "offset": spec.offset,
        "signal": [_mat_json(G) for G in spec.signal],
        "interf": [_mat_json(G) for G in spec.interf],
        "targets": spec.targets.tolist(),
        "noise_var": spec.noise_var,
        "combiner_norms": np.asarray(spec.combiner_norms).tolist(),
        "power_budget": spec.power_budget,
        "diag_cap": spec.diag_cap,
    }
    Path(path).write_text(json.dumps(doc))


def _mat_from_json(d) -> np.ndarray:
    shape = tuple(d["shape"])
    return (np.asarray(d["real"]) + 1j * np.asarray(d["imag"])).reshape(shape)


def load_problem(path: str | Path):
    doc = json.loads(Path(path).read_text())
    if doc["kind"] == "socp_step":
        return SocpStepSpec(
            combiners=_mat_from_json(doc["combiners"]),
            signal=_mat_from_json(doc["signal"]),
            interference=_mat_from_json(doc["interference"]),
            thresholds=np.asarray(doc["thresholds"]),
            noise_var=doc["noise_var"],
            power_budget=doc["power_budget"],
            tone_cap=doc["tone_cap"],
        )
    if doc["kind"] == "sdp_step":
        return SdpStepSpec(
            objective=_mat_from_json(doc["objective"]),
            signal=[_mat_from_json(G) for G in doc["signal"]],
            interf=[_mat_from_json(G) for G in doc["interf"]],
            targets=np.asarray(doc["targets"]),
            noise_var=doc["noise_var"],
            power_budget=doc["power_budget"],
            offset=doc["offset"],
            combiner_norms=np.asarray(doc["combiner_norms"]),
            diag_cap=doc["diag_cap"],
        )
    raise ValueError(f"unknown problem kind {doc['kind']!r}")
