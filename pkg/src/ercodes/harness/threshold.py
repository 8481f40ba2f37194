"""Target-BER threshold estimation from raw error counts.

``logit(P_b)`` is modelled as a polynomial in the SNR (dB) and fitted by maximum
binomial likelihood (IRLS). The threshold is where the fitted curve first crosses ``D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import expit, logit, xlogy

from .config import TARGET_BER

# how far outside the simulated grid a crossing is still searched for (dB)
SEARCH_MARGIN_DB = 1.0
# crossings further than this outside the grid are flagged as extrapolated beyond tolerance
EXTRAPOLATION_TOLERANCE_DB = 0.25


@dataclass
class ThresholdFit:
    coefficients: np.ndarray         # ascending powers of SNR in dB
    snr_db: float | None             # SNR* with fitted P_b = D, None without a crossing
    deviance: float
    status: str                      # ok | below_target_everywhere | above_target_everywhere
    target: float
    grid_db: tuple[float, float]
    converged: bool = True
    iterations: int = 0
    monotone: bool = True
    extrapolated: bool = False
    notes: list = field(default_factory=list)

    @property
    def P(self) -> float | None:
        return None if self.snr_db is None else 10.0 ** (self.snr_db / 10.0)

    @property
    def outside_db(self) -> float:
        """Distance of SNR* outside the simulated grid (0 inside)."""
        if self.snr_db is None:
            return 0.0
        lo, hi = self.grid_db
        return max(lo - self.snr_db, self.snr_db - hi, 0.0)

    def predict(self, snr_db) -> np.ndarray:
        return expit(Polynomial(self.coefficients)(np.asarray(snr_db, dtype=float)))

    def to_dict(self) -> dict:
        return {"coefficients": [float(c) for c in self.coefficients], "snr_db": self.snr_db,
                "P": self.P, "deviance": self.deviance, "status": self.status,
                "target": self.target, "grid_db": list(self.grid_db), "converged": self.converged,
                "iterations": self.iterations, "monotone": self.monotone,
                "extrapolated": self.extrapolated, "outside_db": self.outside_db,
                "notes": list(self.notes)}


def irls_logistic(x, errors, trials, degree: int, tol: float = 1e-8, max_iter: int = 100):
    """Binomial-likelihood polynomial logistic fit; returns ``(coef, iterations, converged)``.

    ``coef`` are ascending coefficients in ``x``. Convergence is declared when the
    largest coefficient change (in the standardized variable) drops below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    e = np.asarray(errors, dtype=float)
    N = np.asarray(trials, dtype=float)
    centre, scale = x.mean(), (x.std() or 1.0)
    z = (x - centre) / scale
    X = np.vander(z, degree + 1, increasing=True)
    # start from a least-squares fit of the smoothed empirical logit
    emp = logit((e + 0.5) / (N + 1.0))
    beta = np.linalg.lstsq(X, emp, rcond=None)[0]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = expit(eta)
        w = np.maximum(N * mu * (1.0 - mu), 1e-300)
        work = eta + (e - N * mu) / w
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], work * sw, rcond=None)[0]
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            converged = True
            break
    shift = Polynomial([-centre / scale, 1.0 / scale])
    coef = Polynomial(beta)(shift).coef
    coef = np.pad(coef, (0, degree + 1 - coef.size))
    return coef, it, converged


def binomial_deviance(errors, trials, mu) -> float:
    e = np.asarray(errors, dtype=float)
    N = np.asarray(trials, dtype=float)
    mu = np.clip(np.asarray(mu, dtype=float), 1e-300, 1.0 - 1e-16)
    dev = xlogy(e, e / (N * mu)) + xlogy(N - e, (N - e) / (N * (1.0 - mu)))
    return float(2.0 * np.sum(dev))


def _points_arrays(points):
    arr = [(float(p), float(e), float(b)) for p, e, b in points]
    arr.sort()
    P, e, b = (np.array(col) for col in zip(*arr))
    if np.any(P <= 0) or np.any(b <= 0) or np.any(e < 0) or np.any(e > b):
        raise ValueError("need P > 0, bits > 0 and 0 <= bit_errors <= bits")
    return 10.0 * np.log10(P), e, b


def fit_threshold(points, D: float = TARGET_BER, degree: int = 3,
                  margin_db: float = SEARCH_MARGIN_DB) -> ThresholdFit:
    """Fit ``logit(P_b)`` vs SNR(dB) and solve for the first crossing of ``D``.

    ``points`` are ``(P, bit_errors, bits)`` triples. The SNR axis is ``10 log10 P``;
    add the scheme's constant offset to express SNR* as E_s/N_0 or E_b/N_0.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    points = list(points)
    if len(points) < degree + 2:
        raise ValueError(f"need at least {degree + 2} points for a degree-{degree} fit")
    if not 0.0 < D < 1.0:
        raise ValueError("target must lie in (0, 1)")
    x, e, N = _points_arrays(points)
    grid = (float(x[0]), float(x[-1]))
    if e.sum() == 0:
        return ThresholdFit(np.full(degree + 1, np.nan), None, 0.0, "below_target_everywhere",
                            D, grid, notes=["no bit errors observed"])
    if np.all(e == N):
        return ThresholdFit(np.full(degree + 1, np.nan), None, 0.0, "above_target_everywhere",
                            D, grid, notes=["every bit in error"])
    coef, iters, converged = irls_logistic(x, e, N, degree)
    poly = Polynomial(coef)
    deviance = binomial_deviance(e, N, expit(poly(x)))
    dense = np.linspace(grid[0], grid[1], 2001)
    monotone = bool(np.all(poly.deriv()(dense) <= 0)) if degree else True
    fit = ThresholdFit(coef, None, deviance, "ok", D, grid, converged, iters, monotone)
    if not monotone:
        fit.notes.append("fitted curve is not monotone over the grid; first crossing reported")
    if not converged:
        fit.notes.append("IRLS did not converge")

    g = lambda s: poly(s) - logit(D)  # noqa: E731  positive above target
    search = np.linspace(grid[0] - margin_db, grid[1] + margin_db, 4001)
    vals = g(search)
    cross = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if cross.size == 0:
        fit.status = "below_target_everywhere" if np.all(vals <= 0) else "above_target_everywhere"
        return fit
    lo, hi = search[cross[0]], search[cross[0] + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    fit.snr_db = float(0.5 * (lo + hi))
    fit.extrapolated = fit.outside_db > 0
    if fit.outside_db > EXTRAPOLATION_TOLERANCE_DB:
        fit.notes.append(f"crossing lies {fit.outside_db:.2f} dB outside the simulated grid")
    return fit


def fit_estimates(estimates, D: float = TARGET_BER, degree: int = 3, **kw) -> ThresholdFit:
    return fit_threshold([(e.P, e.bit_errors, e.bits_counted) for e in estimates], D, degree, **kw)


def _resampled_points(estimates, rng):
    pts = []
    for est in estimates:
        F = est.frames_counted
        counts = rng.multinomial(F, np.full(F, 1.0 / F))
        pts.append((est.P, float(counts @ est.frame_bit_errors), est.bits_counted))
    return pts


def bootstrap_thresholds(estimates, D: float = TARGET_BER, degree: int = 3, n_boot: int = 200,
                         seed: int = 0, **kw) -> np.ndarray:
    """SNR* of fits to frame-level bootstrap resamples.

    A resample without a crossing gets ``-inf`` when it is below the target everywhere
    (the threshold lies below the grid) and ``+inf`` when it never reaches the target.
    """
    rng = np.random.default_rng(seed)
    out = np.full(n_boot, np.inf)
    for i in range(n_boot):
        fit = fit_threshold(_resampled_points(estimates, rng), D, degree, **kw)
        if fit.snr_db is not None:
            out[i] = fit.snr_db
        elif fit.status == "below_target_everywhere":
            out[i] = -np.inf
    return out


def threshold_ci(estimates, D: float = TARGET_BER, degree: int = 3, n_boot: int = 200,
                 seed: int = 0, confidence: float = 0.95, **kw) -> tuple[float, float]:
    boots = bootstrap_thresholds(estimates, D, degree, n_boot, seed, **kw)
    a = 100 * (1 - confidence) / 2
    # order statistics, so infinite resamples never enter an interpolation
    return (float(np.percentile(boots, a, method="inverted_cdf")),
            float(np.percentile(boots, 100 - a, method="inverted_cdf")))


def threshold_gap_ci(estimates_a, estimates_b, D: float = TARGET_BER, degree: int = 3,
                     n_boot: int = 200, seed: int = 0, confidence: float = 0.95, **kw):
    """Percentile interval of ``SNR*_b - SNR*_a`` from independent bootstraps."""
    ta = bootstrap_thresholds(estimates_a, D, degree, n_boot, seed, **kw)
    tb = bootstrap_thresholds(estimates_b, D, degree, n_boot, seed + 1, **kw)
    with np.errstate(invalid="ignore"):
        diff = tb - ta  # NaN only when both resamples miss the target on the same side
    diff = diff[~np.isnan(diff)]
    if diff.size < n_boot // 2:
        return float("nan"), float("nan")
    a = 100 * (1 - confidence) / 2
    return (float(np.percentile(diff, a, method="inverted_cdf")),
            float(np.percentile(diff, 100 - a, method="inverted_cdf")))
