"""Two-parameter efficiency fit of squeezed levels measured versus PSA gain.

The model splits the optical efficiency at the measurement OPA: ``eta_pre``
covers everything before the amplifier gain stage and ``eta_post`` the loss
after it, so that

    eta(G) = eta_pre * eta_post / (eta_post + (1 - eta_post) / G)
    level_dB(G) = 10 log10(eta(G) exp(-2 r0) + 1 - eta(G))

The level depends on eta_pre and r0 only through eta_pre (1 - exp(-2 r0)), so
with r0 free only that product and eta_post are identified; the returned
(eta_pre, r0) is one point on the degenerate ridge.

Parameters are box-constrained; the solver is a damped Gauss-Newton
(Levenberg-Marquardt) iteration with projection onto the box, restarted from
every node of a coarse grid.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from eprsim.errors import FitError

DB = 10.0 / np.log(10.0)
R0_BOUNDS = (0.0, 5.0)


def eta_of_gain(gain, eta_pre, eta_post):
    gain = np.asarray(gain, dtype=float)
    return eta_pre * eta_post * gain / (eta_post * gain + 1.0 - eta_post)


def model_db(gain, eta_pre, eta_post, r0):
    eta = eta_of_gain(gain, eta_pre, eta_post)
    return DB * np.log(eta * np.exp(-2.0 * r0) + 1.0 - eta)


def _jacobian(gain, p, free_r0):
    a, b, r = p
    den = b * gain + 1.0 - b
    eta = a * b * gain / den
    s = np.exp(-2.0 * r)
    u = eta * (s - 1.0) + 1.0
    dy_deta = DB * (s - 1.0) / u
    cols = [dy_deta * b * gain / den, dy_deta * a * gain / den**2]
    if free_r0:
        cols.append(DB * eta * (-2.0 * s) / u)
    return np.column_stack(cols)


@dataclass(frozen=True)
class FitResult:
    eta_pre: float
    eta_post: float
    r0: float
    residual: float
    n_iter: int
    converged: bool
    n_starts: int

    def to_dict(self) -> dict:
        return asdict(self)


def _lm(gain, y, p0, lo, hi, free_r0, max_iter, tol):
    p = np.clip(p0, lo, hi)
    k = 3 if free_r0 else 2

    def residuals(q):
        return y - model_db(gain, q[0], q[1], q[2])

    res = residuals(p)
    cost = float(res @ res)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(gain, p, free_r0)
        A = J.T @ J
        grad = J.T @ res
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(A + lam * (np.diag(np.diag(A)) + 1e-12 * np.eye(k)), grad)
            trial = p.copy()
            trial[:k] = np.clip(p[:k] + step, lo[:k], hi[:k])
            tres = residuals(trial)
            tcost = float(tres @ tres)
            if tcost <= cost:
                improved = True
                break
            lam *= 4.0
        if not improved:
            return p, cost, it, True
        change = cost - tcost
        p, res = trial, tres
        lam = max(lam / 3.0, 1e-12)
        if change <= tol * max(cost, 1e-300) or tcost < 1e-28:
            return p, tcost, it, True
        cost = tcost
    return p, cost, max_iter, False


def fit_efficiencies(
    gains,
    measured_db,
    r0: float | None = None,
    *,
    grid: int = 11,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> FitResult:
    """Least-squares fit of (eta_pre, eta_post[, r0]) to squeezed levels versus linear gain.

    Args:
        gains: linear PSA gains (>= 1) of the observations.
        measured_db: measured squeezed-quadrature levels relative to shot noise.
        r0: fixed source squeezing parameter, or None to fit it as well (then
            only eta_pre * (1 - exp(-2 r0)) is meaningful, see module notes).

    Raises:
        FitError: too few distinct gains for the number of parameters, or no
            start converged within ``max_iter`` iterations (``best`` is set).
    """
    gain = np.asarray(gains, dtype=float)
    y = np.asarray(measured_db, dtype=float)
    if gain.shape != y.shape or gain.ndim != 1:
        raise ValueError("gains and measured_db must be 1-D arrays of equal length")
    if np.any(gain < 1):
        raise ValueError("gains must be linear and >= 1")
    free_r0 = r0 is None
    n_params = 3 if free_r0 else 2
    if len(np.unique(gain)) < n_params:
        raise FitError(f"rank deficient: need observations at >= {n_params} distinct gains")
    lo = np.array([0.0, 0.0, R0_BOUNDS[0]])
    hi = np.array([1.0, 1.0, R0_BOUNDS[1]])
    nodes = np.clip(np.linspace(0.0, 1.0, grid), 0.02, 0.98)
    r_starts = np.linspace(0.2, 2.0, 4) if free_r0 else [float(r0)]

    best = None
    n_starts = 0
    for a in nodes:
        for b in nodes:
            for rs in r_starts:
                n_starts += 1
                p, cost, it, ok = _lm(gain, y, np.array([a, b, rs]), lo, hi, free_r0, max_iter, tol)
                if best is None or cost < best[1]:
                    best = (p, cost, it, ok)
    p, cost, it, ok = best
    result = FitResult(
        eta_pre=float(p[0]),
        eta_post=float(p[1]),
        r0=float(p[2]),
        residual=float(np.sqrt(cost / len(y))),
        n_iter=int(it),
        converged=bool(ok),
        n_starts=n_starts,
    )
    if not ok:
        raise FitError("efficiency fit did not converge", best=result)
    return result
