"""Nonlinear least squares and the spectrum/coupling fit pipelines.

A self-contained Levenberg-Marquardt engine with numerically
differentiated Jacobians drives three fits: per-spectrum extraction of
the coupled-system parameters from a transmission trace (T1 held fixed),
the two-parameter sinusoid for coupling versus position along the
resonator, and the one-parameter height fit of coupling versus lateral
position against a capacitance grid.

Residuals are uniformly weighted throughout. Reported sigmas are
standard errors from the local quadratic model,
``cov = s^2 (J^T J)^-1`` with ``s^2`` the reduced chi-square.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import coupling_map, jc_model, transmon

__all__ = [
    "FitResult",
    "FluxScanResult",
    "lm_minimize",
    "numerical_jacobian",
    "estimate_spectrum_init",
    "fit_spectrum",
    "fit_flux_scan",
    "fit_gx",
    "fit_gy",
]

MAX_ITERATIONS = 500
FTOL = 1e-10  # relative reduction of the residual norm
XTOL = 1e-12  # step norm
GTOL = 1e-8  # max cosine between residual and Jacobian columns
LAMBDA_INIT = 1e-3
_LAMBDA_MAX = 1e13


@dataclass
class FitResult:
    """Named fitted values, 1-sigma uncertainties, and convergence info.

    ``cost_history`` holds the residual norm after every accepted step
    (starting with the initial point), so descent can be audited.
    """

    params: dict[str, float]
    sigmas: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    message: str = ""
    cost_history: tuple[float, ...] = ()

    def __str__(self):
        status = "converged" if self.converged else f"NOT converged ({self.message})"
        parts = [f"{k} = {v:.9g} +- {self.sigmas.get(k, float('nan')):.3g}"
                 for k, v in self.params.items()]
        return f"FitResult[{status}, |r| = {self.residual_norm:.4g}]: " + ", ".join(parts)


@dataclass
class FluxScanResult:
    """Per-flux fit results plus aggregates over the converged fits."""

    fluxes: tuple[float, ...]
    results: tuple[FitResult, ...]
    means: dict[str, float]
    stds: dict[str, float]
    n_converged: int

    @property
    def n_total(self) -> int:
        return len(self.results)


def numerical_jacobian(residual, x: np.ndarray, r0: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Jacobian of a residual function at x."""
    x = np.asarray(x, dtype=float)
    if r0 is None:
        r0 = np.asarray(residual(x), dtype=float)
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = 1.5e-8 * max(abs(x[j]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (
            np.asarray(residual(xp), dtype=float) - np.asarray(residual(xm), dtype=float)
        ) / (2.0 * h)
    return jac


def _normalize_initial(initial):
    if isinstance(initial, Mapping):
        names = list(initial.keys())
        x0 = np.array([float(initial[k]) for k in names])
    else:
        x0 = np.asarray(initial, dtype=float).ravel()
        names = [f"p{i}" for i in range(x0.size)]
    return names, x0


def _normalize_bounds(bounds, names, x0):
    if bounds is None:
        return None
    lo = np.full(x0.size, -np.inf)
    hi = np.full(x0.size, np.inf)
    if isinstance(bounds, Mapping):
        items = bounds.items()
        index = {n: i for i, n in enumerate(names)}
        for name, (a, b) in items:
            if name not in index:
                raise ValueError(f"bounds given for unknown parameter {name!r}")
            lo[index[name]], hi[index[name]] = a, b
    else:
        for i, (a, b) in enumerate(bounds):
            lo[i], hi[i] = a, b
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("initial point violates bounds")
    return lo, hi


def _sigmas_from_normal(jtj: np.ndarray, cost: float, m: int) -> tuple[np.ndarray, bool]:
    """Standard errors from the (possibly ill-conditioned) normal matrix.

    Near-null curvature directions get their eigenvalues floored, which
    turns unidentifiable parameters into large (finite) sigmas instead
    of NaNs.
    """
    n = jtj.shape[0]
    dof = max(m - n, 1)
    s2 = cost / dof
    w, v = np.linalg.eigh(jtj)
    wmax = max(float(w[-1]), 0.0)
    singular = bool(wmax <= 0.0 or float(w[0]) <= 1e-14 * wmax)
    floor = max(wmax, 1.0) * 1e-300 if wmax <= 0 else wmax * 1e-14
    w = np.maximum(w, floor)
    cov_diag = ((v * v) / w) @ np.ones(n) * s2
    return np.sqrt(np.maximum(cov_diag, 0.0)), singular


def lm_minimize(
    residual,
    initial,
    bounds=None,
    *,
    max_iter: int = MAX_ITERATIONS,
    ftol: float = FTOL,
    xtol: float = XTOL,
    gtol: float = GTOL,
    lambda_init: float = LAMBDA_INIT,
) -> FitResult:
    """Levenberg-Marquardt minimization of sum(residual(x)^2).

    Parameters
    ----------
    residual : callable mapping a parameter vector to a residual array.
    initial : mapping name -> value (names propagate to the result) or a
        plain sequence (parameters are then named p0, p1, ...).
    bounds : optional mapping name -> (lo, hi) or sequence of pairs;
        trial steps are clipped into the box.

    The damping factor is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one. Convergence is declared when the
    relative reduction of the residual norm drops below ``ftol``, the
    step norm below ``xtol``, or the residual becomes orthogonal to all
    Jacobian columns to within ``gtol``. A singular normal matrix or
    hitting the iteration cap yields ``converged=False`` with an
    explanatory message, never silent NaNs.
    """
    names, x = _normalize_initial(initial)
    box = _normalize_bounds(bounds, names, x)

    r = np.asarray(residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residual function not finite at the initial point")
    cost = float(r @ r)
    history = [math.sqrt(cost)]
    lam = lambda_init
    converged = False
    message = "iteration cap reached"
    n_iter = 0
    jtj = np.eye(x.size)

    for n_iter in range(1, max_iter + 1):
        jac = numerical_jacobian(residual, x, r)
        jtj = jac.T @ jac
        grad = jac.T @ r

        # orthogonality test: cosine of residual against each column
        rnorm = math.sqrt(cost)
        col_norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", jac, jac), 0.0))
        denom = np.where(col_norms > 0, col_norms * max(rnorm, 1e-300), 1.0)
        if rnorm == 0.0 or float(np.max(np.abs(grad) / denom)) <= gtol:
            converged = True
            message = "gradient within tolerance"
            break

        scale = np.diag(jtj).copy()
        scale[scale <= 0] = 1.0
        accepted = False
        while lam <= _LAMBDA_MAX:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                message = "singular normal matrix"
                break
            x_try = x + step
            if box is not None:
                x_try = np.clip(x_try, box[0], box[1])
                step = x_try - x
            # local-model prediction for this step; when even the predicted
            # relative improvement falls below ftol the point is stationary
            # to working precision and rejections just mean noise
            pred_decrease = -(2.0 * step @ grad + step @ (jtj @ step))
            if 0.0 <= pred_decrease <= 2.0 * ftol * cost:
                converged = True
                message = "predicted residual reduction below ftol"
                break
            r_try = np.asarray(residual(x_try), dtype=float)
            cost_try = float(r_try @ r_try) if np.all(np.isfinite(r_try)) else np.inf
            if cost_try < cost:
                rel_drop = (rnorm - math.sqrt(cost_try)) / rnorm if rnorm > 0 else 0.0
                x, r, cost = x_try, r_try, cost_try
                history.append(math.sqrt(cost))
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if rel_drop < ftol:
                    converged = True
                    message = "relative residual reduction below ftol"
                elif float(np.linalg.norm(step)) < xtol:
                    converged = True
                    message = "step norm below xtol"
                elif math.sqrt(cost) <= 1e-14 * history[0]:
                    # exact-data fits would otherwise chase the residual
                    # into underflow one decade per iteration
                    converged = True
                    message = "residual norm at numerical floor"
                break
            lam *= 10.0
        else:
            message = "stalled: no downhill step found (damping exhausted)"
        if not accepted or converged:
            break

    sigmas, singular = _sigmas_from_normal(jtj, cost, r.size)
    if singular and converged:
        message += "; normal matrix singular, sigmas from floored spectrum"
    return FitResult(
        params=dict(zip(names, (float(v) for v in x))),
        sigmas=dict(zip(names, (float(s) for s in sigmas))),
        residual_norm=math.sqrt(cost),
        iterations=n_iter,
        converged=converged,
        message=message,
        cost_history=tuple(history),
    )


# positive-parameter reparameterization: v = softplus(u), smooth bijection
# from the reals onto (0, inf)


def _softplus(u: float) -> float:
    return float(np.logaddexp(0.0, u))


def _softplus_inv(v: float) -> float:
    if v <= 0:
        raise ValueError(f"softplus inverse needs a positive value, got {v}")
    if v > 40.0:
        return v + math.log1p(-math.exp(-v))
    return math.log(math.expm1(v))


def _smooth(values: np.ndarray) -> np.ndarray:
    n = values.size
    w = max(3, int(round(0.02 * n)) | 1)
    pad = np.concatenate([np.full(w // 2, values[0]), values, np.full(w // 2, values[-1])])
    return np.convolve(pad, np.ones(w) / w, mode="valid")


def _two_tallest_maxima(values: np.ndarray) -> tuple[int, int | None, np.ndarray]:
    sm = _smooth(values)
    n = sm.size
    interior = (sm[1:-1] >= sm[:-2]) & (sm[1:-1] >= sm[2:])
    locs = np.nonzero(interior)[0] + 1
    if locs.size == 0:
        locs = np.array([int(np.argmax(sm))])
    order = locs[np.argsort(-sm[locs], kind="stable")]
    first = int(order[0])
    min_sep = max(2, int(round(0.02 * n)) | 1)
    second = next((int(i) for i in order[1:] if abs(int(i) - first) > min_sep), None)
    return first, second, sm


def estimate_spectrum_init(trace: jc_model.SpectrumTrace, t1: float) -> jc_model.JcParams:
    """Heuristic starting point for :func:`fit_spectrum`.

    The center frequency comes from the midpoint of the two tallest
    (smoothed) local maxima, g from half their distance, kappa from the
    FWHM of the taller peak, the amplitude from its height, and the
    background from the trace edges.
    """
    f = trace.freqs
    y = trace.values
    i1, i2, sm = _two_tallest_maxima(y)
    edge = max(3, y.size // 20)
    bg0 = max(float(0.5 * (np.mean(y[:edge]) + np.mean(y[-edge:]))), 0.0)
    amp0 = max(float(sm[i1] - bg0), 1e-12)

    step = float(f[1] - f[0]) if f.size > 1 else 1e-6
    if i2 is not None:
        g0 = max(0.5 * abs(float(f[i1] - f[i2])), step)
        center = 0.5 * float(f[i1] + f[i2])
    else:
        g0 = max((float(f[-1]) - float(f[0])) / 40.0, step)
        center = float(f[i1])

    half = bg0 + 0.5 * amp0
    hi = i1
    while hi < y.size - 1 and sm[hi] > half:
        hi += 1
    lo = i1
    while lo > 0 and sm[lo] > half:
        lo -= 1
    kappa0 = max(float(f[hi] - f[lo]), 2.0 * step)

    return jc_model.JcParams(
        nu_r=center, nu_q=center, g=g0, kappa=kappa0, t1=t1, amp=amp0, bg=bg0
    )


def fit_spectrum(
    trace: jc_model.SpectrumTrace,
    init: jc_model.JcParams | None = None,
    t1_fixed: float | None = None,
) -> FitResult:
    """Fit the transmission model to a trace with T1 held fixed.

    Free parameters: nu_r, nu_q, g, kappa, amp, bg. Positivity of g and
    kappa is enforced by fitting their softplus preimages, so the
    engine itself runs unconstrained; reported values and sigmas are
    mapped back through the bijection. g >= 0 also resolves the model's
    g -> -g symmetry.
    """
    if t1_fixed is None:
        if init is None:
            raise ValueError("t1_fixed is required when no init is given")
        t1_fixed = init.t1
    if init is None:
        init = estimate_spectrum_init(trace, t1_fixed)
    span = float(trace.freqs[-1] - trace.freqs[0])
    if init.g > 0 and span <= 4.0 * init.g:
        raise ValueError(
            f"trace span {span} GHz too narrow for g ~ {init.g} GHz (need > 4 g)"
        )

    freqs = trace.freqs
    values = trace.values

    def residual(x: np.ndarray) -> np.ndarray:
        nu_r, nu_q, u_g, u_k, amp, bg = x
        g = _softplus(u_g)
        kappa = _softplus(u_k)
        m = _model_values(nu_r, nu_q, g, kappa, t1_fixed, amp, bg, freqs)
        return m - values

    start = {
        "nu_r": init.nu_r,
        "nu_q": init.nu_q,
        "u_g": _softplus_inv(max(init.g, 1e-6)),
        "u_kappa": _softplus_inv(max(init.kappa, 1e-6)),
        "amp": init.amp,
        "bg": init.bg,
    }
    raw = lm_minimize(residual, start)

    params = {
        "nu_r": raw.params["nu_r"],
        "nu_q": raw.params["nu_q"],
        "g": _softplus(raw.params["u_g"]),
        "kappa": _softplus(raw.params["u_kappa"]),
        "amp": raw.params["amp"],
        "bg": raw.params["bg"],
    }

    # uncertainties from the physical-parameter Jacobian at the optimum:
    # the delta method through the bijection degenerates at g -> 0 (the
    # model is even in g there), while the floored normal-matrix spectrum
    # correctly reports an unidentifiable g as a large sigma
    def residual_phys(x: np.ndarray) -> np.ndarray:
        nu_r, nu_q, g, kappa, amp, bg = x
        return _model_values(nu_r, nu_q, g, kappa, t1_fixed, amp, bg, freqs) - values

    order = ("nu_r", "nu_q", "g", "kappa", "amp", "bg")
    x_phys = np.array([params[k] for k in order])
    jac = numerical_jacobian(residual_phys, x_phys)
    sig, _ = _sigmas_from_normal(jac.T @ jac, raw.residual_norm**2, values.size)
    sigmas = dict(zip(order, (float(s) for s in sig)))
    return FitResult(
        params=params,
        sigmas=sigmas,
        residual_norm=raw.residual_norm,
        iterations=raw.iterations,
        converged=raw.converged,
        message=raw.message,
        cost_history=raw.cost_history,
    )


def _model_values(nu_r, nu_q, g, kappa, t1, amp, bg, freqs) -> np.ndarray:
    # bypass JcParams validation inside the hot loop but keep semantics:
    # the transform guarantees g, kappa > 0; amp/bg may roam during the fit
    delta = nu_q - nu_r
    half = 0.5 * delta
    s = math.hypot(half, g)
    center = 0.5 * (nu_r + nu_q)
    g2 = g * g
    if delta >= 0.0:
        u = half + s
        w_plus = g2 / (g2 + u * u)
        w_minus = 1.0 - w_plus
    else:
        u = half - s
        w_minus = g2 / (g2 + u * u)
        w_plus = 1.0 - w_minus
    r1 = jc_model.qubit_decay_rate(t1)
    gamma_p = w_plus * kappa + (1.0 - w_plus) * r1
    gamma_m = w_minus * kappa + (1.0 - w_minus) * r1
    a = w_plus * jc_model.complex_lorentzian(freqs, center + s, gamma_p)
    a += w_minus * jc_model.complex_lorentzian(freqs, center - s, gamma_m)
    return bg + amp * np.abs(a) ** 2


def fit_flux_scan(
    traces: Sequence[tuple[float, jc_model.SpectrumTrace]],
    init: jc_model.JcParams | None = None,
    t1_fixed: float | None = None,
) -> FluxScanResult:
    """Fit every (flux, trace) pair and aggregate the converged fits.

    Each trace gets its own initialization (seeding nu_q per flux from
    its own peaks) unless an explicit ``init`` is supplied. Means and
    sample standard deviations of amp, bg, g, kappa, nu_r are computed
    over converged fits only; fewer than 3 converged fits is an error.
    """
    if len(traces) < 3:
        raise ValueError(f"need at least 3 traces, got {len(traces)}")
    fluxes = tuple(float(fl) for fl, _ in traces)
    results = tuple(fit_spectrum(tr, init=init, t1_fixed=t1_fixed) for _, tr in traces)
    good = [res for res in results if res.converged]
    if len(good) < 3:
        raise RuntimeError(f"only {len(good)} of {len(results)} fits converged; need >= 3")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    for key in ("amp", "bg", "g", "kappa", "nu_r"):
        vals = np.array([res.params[key] for res in good])
        means[key] = float(vals.mean())
        if vals.size < 2 or vals.max() == vals.min():
            stds[key] = 0.0  # identical fits: exactly zero, no rounding dust
        else:
            stds[key] = float(vals.std(ddof=1))
    return FluxScanResult(
        fluxes=fluxes, results=results, means=means, stds=stds, n_converged=len(good)
    )


def fit_gx(points: Sequence[tuple[float, float]], l_r: float) -> FitResult:
    """Fit g(dx) = g_max sin(pi (dx + x0) / l_r) for (g_max, x0).

    ``points`` are (displacement, coupling) pairs with displacements
    measured from the first probed position. The starting point scans a
    coarse x0 grid, solving g_max linearly at each candidate, before the
    joint refinement.
    """
    if len(points) < 2:
        raise ValueError(f"need at least 2 points, got {len(points)}")
    dx = np.array([float(p[0]) for p in points])
    gy = np.array([float(p[1]) for p in points])

    best = None
    for x0_try in np.linspace(0.0, l_r, 65)[:-1]:
        s = np.sin(np.pi * (dx + x0_try) / l_r)
        ss = float(s @ s)
        gmax_try = float(s @ gy) / ss if ss > 1e-12 else 0.0
        cost = float(np.sum((gy - gmax_try * s) ** 2))
        if best is None or cost < best[0]:
            best = (cost, gmax_try, x0_try)
    _, gmax0, x00 = best

    def residual(x: np.ndarray) -> np.ndarray:
        g_max, x0 = x
        return g_max * np.sin(np.pi * (dx + x0) / l_r) - gy

    return lm_minimize(residual, {"g_max": gmax0, "x0": x00})


def _chi2_gy(z, ys, gs, grid, geom, x, cutoff) -> float:
    model = np.array(
        [coupling_map.g_of_position(x, float(y), float(z), grid, geom, cutoff) for y in ys]
    )
    d = model - gs
    return float(d @ d)


def fit_gy(
    points: Sequence[tuple[float, float]],
    grid: coupling_map.CapacitanceGrid,
    geom: coupling_map.GeometryParams,
    x: float,
    cutoff: int = transmon.DEFAULT_CUTOFF,
) -> FitResult:
    """Fit the qubit height z to measured (y, g) points.

    One-dimensional least squares against the capacitance-grid coupling
    model with everything else fixed: golden-section search over the
    grid's z range followed by a single parabolic refinement. A minimum
    on the grid boundary is reported as non-converged, since the
    no-extrapolation rule makes it untrustworthy.
    """
    if not points:
        raise ValueError("need at least 1 point")
    ys = np.array([float(p[0]) for p in points])
    gs = np.array([float(p[1]) for p in points])
    z_lo, z_hi = grid.z_bounds

    chi2 = lambda z: _chi2_gy(z, ys, gs, grid, geom, x, cutoff)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = z_lo, z_hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = chi2(c), chi2(d)
    iterations = 0
    tol = 1e-3
    while (b - a) > tol:
        iterations += 1
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = chi2(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = chi2(d)
    z_best = 0.5 * (a + b)

    # one parabolic refinement through (z-h, z, z+h)
    h = max(tol, 1e-3 * (z_hi - z_lo))
    z_m = max(z_best - h, z_lo)
    z_p = min(z_best + h, z_hi)
    f0, fm, fp = chi2(z_best), chi2(z_m), chi2(z_p)
    denom = (z_m - z_p) * (fm - f0) - (z_m - z_best) * (fm - fp)
    if abs(denom) > 0:
        num = (z_m - z_p) ** 2 * (fm - f0) - (z_m - z_best) ** 2 * (fm - fp)
        z_ref = z_m - 0.5 * num / denom
        if z_lo <= z_ref <= z_hi and chi2(z_ref) <= f0:
            z_best = z_ref
            f0 = chi2(z_ref)

    # curvature-based standard error: chi2 ~ chi2_min + (z - z*)^2 chi''/2
    hh = max(10 * tol, 1e-2 * (z_hi - z_lo))
    zm2, zp2 = max(z_best - hh, z_lo), min(z_best + hh, z_hi)
    curv = (chi2(zm2) - 2.0 * f0 + chi2(zp2)) / ((0.5 * (zp2 - zm2)) ** 2)
    dof = max(len(points) - 1, 1)
    s2 = f0 / dof
    sigma_z = math.sqrt(2.0 * s2 / curv) if curv > 0 else float("inf")

    edge = 1e-3 * (z_hi - z_lo)
    at_boundary = (z_best - z_lo) < edge or (z_hi - z_best) < edge
    return FitResult(
        params={"z": float(z_best)},
        sigmas={"z": float(sigma_z)},
        residual_norm=math.sqrt(f0),
        iterations=iterations,
        converged=not at_boundary,
        message="minimum at grid z boundary" if at_boundary else "golden section converged",
        cost_history=(math.sqrt(f0),),
    )
