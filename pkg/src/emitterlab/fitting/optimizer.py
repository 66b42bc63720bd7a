"""Bounded Levenberg-Marquardt least squares with finite-difference Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError

MAX_ITER = 500
GTOL = 1e-10
XTOL = 1e-12
FD_STEP = 1e-6
# a fit whose final relative gradient exceeds this is not reported as converged
CONVERGED_GRADIENT = 1e-6


@dataclass
class FitResult:
    model: str
    names: tuple[str, ...]
    values: np.ndarray
    errors: np.ndarray
    units: tuple[str, ...]
    rss: float
    iterations: int
    converged: bool
    message: str
    grad_norm: float
    n_points: int
    warnings: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    @property
    def params(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def report(self) -> str:
        """Plain-text summary with fixed formatting (stable across runs)."""
        lines = [f"model: {self.model}",
                 f"converged: {'yes' if self.converged else 'no'} ({self.message})",
                 f"iterations: {self.iterations}",
                 f"points: {self.n_points}",
                 f"rss: {self.rss:.9g}",
                 f"relative_gradient: {self.grad_norm:.3e}"]
        for n, v, e, u in zip(self.names, self.values, self.errors, self.units):
            unit = f" {u}" if u else ""
            lines.append(f"param {n} = {v:.9g} +/- {e:.3g}{unit}")
        for key in sorted(self.extras):
            val = self.extras[key]
            if isinstance(val, float):
                val = f"{val:.9g}"
            lines.append(f"{key}: {val}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


def _fd_steps(p, lower, upper, rel_step):
    h = rel_step * np.maximum(np.abs(p), 1.0)
    # step backwards where a forward step would leave the box
    return np.where(p + h > upper, -h, h)


def fd_jacobian(fun, p, rel_step=FD_STEP, bounds=None, f0=None):
    """Forward-difference Jacobian of a vector function ``fun(p)``."""
    p = np.asarray(p, dtype=float)
    lower, upper = _bounds_arrays(bounds, len(p))
    f0 = np.asarray(fun(p) if f0 is None else f0, dtype=float)
    h = _fd_steps(p, lower, upper, rel_step)
    jac = np.empty((f0.size, p.size))
    for j in range(p.size):
        q = p.copy()
        q[j] += h[j]
        jac[:, j] = (np.asarray(fun(q), dtype=float) - f0) / h[j]
    return jac


def central_jacobian(fun, p, rel_step=FD_STEP / 10):
    p = np.asarray(p, dtype=float)
    h = rel_step * np.maximum(np.abs(p), 1.0)
    cols = []
    for j in range(p.size):
        up, dn = p.copy(), p.copy()
        up[j] += h[j]
        dn[j] -= h[j]
        cols.append((np.asarray(fun(up), float) - np.asarray(fun(dn), float)) / (2 * h[j]))
    return np.column_stack(cols)


def _bounds_arrays(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lower, upper = bounds
    return (np.broadcast_to(np.asarray(lower, float), (n,)).copy(),
            np.broadcast_to(np.asarray(upper, float), (n,)).copy())


def _relative_gradient(jac, r, free):
    rnorm = np.linalg.norm(r)
    if rnorm == 0:
        return 0.0
    cnorm = np.linalg.norm(jac, axis=0)
    g = jac.T @ r
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(cnorm > 0, np.abs(g) / (cnorm * rnorm), 0.0)
    cos = cos[free]
    return float(cos.max()) if cos.size else 0.0


def least_squares(model, p0, x, y, *, weights=None, bounds=None, names=None, units=None,
                  model_id="custom", max_iter=MAX_ITER, gtol=GTOL, xtol=XTOL,
                  rel_step=FD_STEP) -> FitResult:
    """Minimise sum(w * (model(x, p) - y)**2) over p inside a box.

    Damped Gauss-Newton with Marquardt's diagonal scaling.  The first trial
    step is undamped; damping grows tenfold on every rejected step and
    shrinks tenfold on acceptance, so accepted steps never increase the
    residual.  Parameters sitting on a bound with the gradient pointing out
    of the box are frozen for that iteration.  Stops when the largest cosine
    between the residual and a Jacobian column is below ``gtol``, when the
    step is below ``xtol`` relative to |p|, or after ``max_iter`` iterations.
    """
    p = np.array(p0, dtype=float)
    npar = p.size
    x = np.asarray(x)
    y = np.asarray(y, dtype=float)
    sw = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    lower, upper = _bounds_arrays(bounds, npar)
    if np.any(p < lower) or np.any(p > upper):
        raise ValueError(f"initial parameters {p} outside bounds")
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(npar))
    units = tuple(units) if units is not None else ("",) * npar
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(sw))):
        raise NumericalError("data or weights contain non-finite values")

    def resid(q):
        r = sw * (np.asarray(model(x, q), dtype=float) - y)
        if not np.all(np.isfinite(r)):
            raise NumericalError(f"non-finite residuals at parameters {q.tolist()}")
        return r

    r = resid(p)
    cost = float(r @ r)
    # residuals this small relative to the data are rounding noise
    floor_cost = (64 * np.finfo(float).eps) ** 2 * float(np.sum((sw * y) ** 2))
    lam = 0.0
    message = "maximum iterations reached"
    iterations = 0
    gnorm = np.inf
    jac = None
    stop = False
    for iterations in range(1, max_iter + 1):
        if cost <= floor_cost:
            message = "zero residual"
            gnorm = 0.0
            break
        jac = fd_jacobian(resid, p, rel_step, (lower, upper), f0=r)
        g = jac.T @ r
        at_lo = (p <= lower) & (g > 0)
        at_hi = (p >= upper) & (g < 0)
        free = ~(at_lo | at_hi)
        gnorm = _relative_gradient(jac, r, free)
        if gnorm <= gtol:
            message = "gradient tolerance reached"
            break
        jf = jac[:, free]
        a = jf.T @ jf
        gf = g[free]
        diag = np.diag(a).copy()
        floor = 1e-12 * diag.max() if diag.size and diag.max() > 0 else 1e-12
        diag = np.maximum(diag, floor)
        while True:
            if lam == 0.0:
                step_f = np.linalg.lstsq(jf, -r, rcond=None)[0]
            else:
                try:
                    step_f = np.linalg.solve(a + lam * np.diag(diag), -gf)
                except np.linalg.LinAlgError:
                    step_f = np.linalg.lstsq(a + lam * np.diag(diag), -gf, rcond=None)[0]
            trial = p.copy()
            trial[free] += step_f
            trial = np.clip(trial, lower, upper)
            step = trial - p
            if np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol):
                message = "step tolerance reached"
                stop = True
                break
            r_new = resid(trial)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                p, r, cost = trial, r_new, cost_new
                lam = lam / 10.0 if lam > 1e-12 else 0.0
                break
            lam = 1e-3 if lam == 0.0 else lam * 10.0
            if lam > 1e16:
                message = "no further decrease possible"
                stop = True
                break
        if stop:
            break

    jac = fd_jacobian(resid, p, rel_step, (lower, upper), f0=r)
    if message == "maximum iterations reached" or gnorm == np.inf:
        gnorm = _relative_gradient(jac, r, np.ones(npar, bool))
    n = y.size
    errors = np.full(npar, np.nan)
    warnings = []
    if n > npar:
        s2 = cost / (n - npar)
        jtj = jac.T @ jac
        rank = np.linalg.matrix_rank(jtj)
        if rank < npar:
            warnings.append(f"rank-deficient Jacobian (rank {rank} < {npar} parameters)")
        cov = np.linalg.pinv(jtj) * s2
        errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        if rank < npar:
            null = np.linalg.svd(jtj)[2][rank:]
            errors[np.any(np.abs(null) > 1e-6, axis=0)] = np.inf
    converged = message in ("zero residual", "gradient tolerance reached") or (
        message in ("step tolerance reached", "no further decrease possible")
        and gnorm <= CONVERGED_GRADIENT)
    return FitResult(model_id, names, p, errors, units, cost, iterations, converged,
                     message, float(gnorm), int(n), warnings)
