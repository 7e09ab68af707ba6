"""Two-interval forced-choice trials and logistic psychometric fitting.

The psychometric function is

    psi(x) = guess + (1 - guess - lapse) * logistic(beta * (x - alpha))

with the guess and lapse rates held fixed.  Fits are maximum likelihood
over a documented (alpha, beta) box; a fit whose optimum sits on the box
edge (separable or all-correct data) is reported as not converged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import ValidationError
from .sobol import sobol_latencies

GUESS = 0.5
LAPSE = 0.0001
LL_TOL = 1e-8
GRID = 41


@dataclass(frozen=True)
class TrialRecord:
    stimulus_latency: float
    correct: bool

    def __post_init__(self):
        object.__setattr__(self, "stimulus_latency", float(self.stimulus_latency))
        object.__setattr__(self, "correct", bool(self.correct))
        if not self.stimulus_latency >= 0:
            raise ValidationError("stimulus_latency must be nonnegative")


@dataclass(frozen=True)
class PsychometricFit:
    alpha: float
    beta: float
    guess_rate: float
    lapse_rate: float
    log_likelihood: float
    converged: bool
    at_boundary: bool = False
    bounds: tuple = ()

    def psi(self, x):
        return psi(x, self.alpha, self.beta, self.guess_rate, self.lapse_rate)

    def report(self, criterion: float = 0.75) -> str:
        lines = [f"alpha_ms      {self.alpha:.4f}", f"beta_per_ms   {self.beta:.4f}"]
        if self.converged:
            lines.append(f"threshold_ms  {threshold_at(self, criterion):.4f}  (criterion {criterion:g})")
        else:
            lines.append("threshold_ms  n/a")
        lines += [f"log_lik       {self.log_likelihood:.6f}",
                  f"converged     {'yes' if self.converged else 'no'}",
                  f"at_boundary   {'yes' if self.at_boundary else 'no'}"]
        return "\n".join(lines) + "\n"


def psi(x, alpha, beta, guess=GUESS, lapse=LAPSE):
    """Probability of a correct response at stimulus ``x``."""
    return guess + (1.0 - guess - lapse) * expit(beta * (np.asarray(x, dtype=float) - alpha))


def _check_rates(guess, lapse):
    if not (0 <= guess < 1 and 0 <= lapse < 1 and guess + lapse < 1):
        raise ValidationError("guess and lapse rates must satisfy guess + lapse < 1")


def _aggregate(trials):
    if len(trials) == 0:
        raise ValidationError("no trials to fit")
    x = np.array([t.stimulus_latency for t in trials], dtype=float)
    c = np.array([bool(t.correct) for t in trials], dtype=float)
    levels, inv = np.unique(x, return_inverse=True)
    if levels.size < 2:
        raise ValidationError("need at least two distinct stimulus levels")
    n = np.bincount(inv).astype(float)
    k = np.bincount(inv, weights=c)
    # weights and proportions are invariant to duplicating the data exactly
    return levels, n / n.sum(), k / n


def default_bounds(levels) -> tuple:
    """(alpha_lo, alpha_hi, beta_lo, beta_hi) from the stimulus span."""
    lo, hi = float(np.min(levels)), float(np.max(levels))
    span = hi - lo
    return (lo - span, hi + span, 0.01 / span, 100.0 / span)


def _mean_ll(alpha, beta, levels, w, phat, guess, lapse):
    a = np.asarray(alpha, dtype=float)[..., None]
    b = np.asarray(beta, dtype=float)[..., None]
    p = np.clip(psi(levels, a, b, guess, lapse), 1e-300, 1 - 1e-16)
    return np.sum(w * (phat * np.log(p) + (1 - phat) * np.log1p(-p)), axis=-1)


def fit_logistic(trials, guess: float = GUESS, lapse: float = LAPSE, bounds=None) -> PsychometricFit:
    """Maximum-likelihood (alpha, beta) with fixed guess and lapse rates.

    Parameters
    ----------
    trials : sequence of TrialRecord
    bounds : tuple, optional
        ``(alpha_lo, alpha_hi, beta_lo, beta_hi)``; see :func:`default_bounds`.

    Notes
    -----
    A log-spaced beta grid times a linear alpha grid seeds a bounded
    Nelder-Mead refinement in (alpha, log beta).
    """
    _check_rates(guess, lapse)
    levels, w, phat = _aggregate(trials)
    a_lo, a_hi, b_lo, b_hi = default_bounds(levels) if bounds is None else bounds
    n_total = len(trials)

    A, B = np.meshgrid(np.linspace(a_lo, a_hi, GRID), np.geomspace(b_lo, b_hi, GRID), indexing="ij")
    ll = _mean_ll(A.ravel(), B.ravel(), levels, w, phat, guess, lapse)
    i = int(np.argmax(ll))
    x0 = np.array([A.ravel()[i], np.log(B.ravel()[i])])

    def nll(v):
        return -float(_mean_ll(v[0], np.exp(v[1]), levels, w, phat, guess, lapse))

    res = minimize(nll, x0, method="Nelder-Mead",
                   bounds=[(a_lo, a_hi), (np.log(b_lo), np.log(b_hi))],
                   options={"fatol": LL_TOL / n_total, "xatol": 1e-9, "maxiter": 4000})
    alpha, log_beta = res.x
    if -res.fun < ll[i]:
        alpha, log_beta = x0
    beta = float(np.exp(log_beta))
    tol_a = 1e-6 * (a_hi - a_lo)
    edge = (alpha - a_lo < tol_a or a_hi - alpha < tol_a
            or log_beta - np.log(b_lo) < 1e-6 or np.log(b_hi) - log_beta < 1e-6)
    total_ll = float(_mean_ll(alpha, beta, levels, w, phat, guess, lapse)) * n_total
    return PsychometricFit(alpha=float(alpha), beta=beta, guess_rate=guess, lapse_rate=lapse,
                           log_likelihood=total_ll, converged=bool(res.success and not edge),
                           at_boundary=bool(edge), bounds=(a_lo, a_hi, b_lo, b_hi))


def log_likelihood(trials, alpha, beta, guess=GUESS, lapse=LAPSE) -> float:
    """Total log-likelihood of ``trials`` at (alpha, beta)."""
    levels, w, phat = _aggregate(trials)
    return float(_mean_ll(alpha, beta, levels, w, phat, guess, lapse)) * len(trials)


def threshold_at(fit: PsychometricFit, criterion: float = 0.75) -> float:
    """Stimulus at which ``psi`` equals ``criterion`` (closed form)."""
    if not fit.converged:
        raise ValidationError("threshold undefined for an unconverged fit")
    g, lam = fit.guess_rate, fit.lapse_rate
    if not g < criterion < 1 - lam:
        raise ValidationError(f"criterion must lie in ({g}, {1 - lam})")
    p = (criterion - g) / (1 - g - lam)
    return fit.alpha + float(np.log(p / (1 - p))) / fit.beta


def synthetic_trials(alpha, beta, n, rng, lo=0.0, hi=25.0, guess=GUESS, lapse=LAPSE) -> list[TrialRecord]:
    """Simulated observer responses at Sobol-placed latencies in [lo, hi]."""
    x = np.asarray(sobol_latencies(n, lo, hi))
    correct = rng.random(n) < psi(x, alpha, beta, guess, lapse)
    return [TrialRecord(float(a), bool(b)) for a, b in zip(x, correct)]


def read_trials(text: str) -> list[TrialRecord]:
    """Parse CSV text with header ``latency_ms,correct``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["latency_ms", "correct"]:
        raise ValidationError("trial CSV must start with the header 'latency_ms,correct'")
    out = []
    for n, row in enumerate(rows[1:], 2):
        if not row or not "".join(row).strip():
            continue
        try:
            lat, corr = row
            lat = float(lat)
            corr = corr.strip()
            if corr not in ("0", "1"):
                raise ValueError
        except ValueError:
            raise ValidationError(f"line {n}: expected 'latency_ms,correct' with correct in {{0,1}}") from None
        out.append(TrialRecord(lat, corr == "1"))
    return out


def write_trials(trials) -> str:
    return "latency_ms,correct\n" + "".join(f"{t.stimulus_latency!r},{int(t.correct)}\n" for t in trials)


def curve_csv(fit: PsychometricFit, lo: float, hi: float, step: float = 0.1) -> str:
    """Fitted curve sampled every ``step`` ms."""
    n = int(round((hi - lo) / step))
    xs = lo + step * np.arange(n + 1)
    return "latency_ms,p_correct\n" + "".join(f"{x:.1f},{p:.6f}\n" for x, p in zip(xs, fit.psi(xs)))
