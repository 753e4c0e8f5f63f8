"""Per-slot uplink transmit-power optimization.

The slot objective sum_k E_k(p) is non-convex through the interference in
each user's SINR.  The solver iterates a tight log-domain surrogate:

  1. anchor the bound  a*log2(gamma) + b <= log2(1+gamma)  at the current
     SINRs (equality and matching slope at the anchor), which makes the
     surrogate energy an upper bound of the true energy that touches it at
     the anchor point;
  2. substitute p = 2^q and apply the quadratic transform with its
     closed-form auxiliary update, leaving a smooth convex inner problem;
  3. descend on the inner problem with projected gradient + backtracking
     under the surface power budget and the per-user power cap.

A candidate power vector is only accepted when the merit value does not
increase, so the reported trace is non-increasing by construction.  With no
rate floors the merit is exactly the true energy sum; with rate floors
(deadline support oS/(D - t_loc)) the merit adds a quadratic hinge on the
shortfall of the surrogate rate, keeping the inner problem convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:      # pure-python fallback, same numerics
    def njit(*args, **kwargs):
        def wrap(func):
            return func
        return wrap

from .scenario import SfpParams

LN2 = float(np.log(2.0))
P_FLOOR_W = 1e-16       # powers below this count as switched off
BUDGET_SLACK = 1e-8


def log2_1p(x):
    """log2(1 + x), accurate when x underflows 1 + x."""
    return np.log1p(x) / LN2


class PowerControlError(ValueError):
    pass


@dataclass(frozen=True)
class PowerProblem:
    """One slot's power subproblem with the surface state frozen.

    gains[k] is the squared norm of user k's equivalent channel; noise[k]
    the constant part of k's SINR denominator (forwarded surface noise for
    k's side plus receiver noise).
    """

    gains: np.ndarray          # (K,)
    noise: np.ndarray          # (K,)
    offload_bits: np.ndarray   # (K,)  o_k * S_k
    e_local: np.ndarray        # (K,)  local-energy part, constant in p
    bandwidth: float
    p_max: float
    budget_total: float        # surface power budget (watts)
    budget_coeff: float        # ||A G||_F^2, shared by every user
    budget_static: float       # sigma^2 ||A||_F^2
    rate_floors: np.ndarray | None = None   # (K,) bps, 0/None = unconstrained


@dataclass
class SfpResult:
    powers: np.ndarray
    merit_trace: list[float] = field(default_factory=list)
    energy: float = 0.0
    iterations: int = 0
    converged: bool = False
    budget_warning: bool = False


# ---------------------------------------------------------------------------
# surrogate pieces

def surrogate_params(gamma_anchor):
    """Bound coefficients (a, b) anchored at gamma_anchor (> 0).

    a*log2(g) + b equals log2(1+g) at the anchor and never exceeds it.
    """
    g = np.asarray(gamma_anchor, dtype=float)
    if np.any(g <= 0):
        raise PowerControlError("anchor SINR must be positive")
    a = g / (1.0 + g)
    b = log2_1p(g) - a * np.log2(g)
    if np.ndim(gamma_anchor) == 0:
        return float(a), float(b)
    return a, b


def sinr_vector(prob: PowerProblem, p: np.ndarray) -> np.ndarray:
    total = float(np.dot(prob.gains, p))
    denom = total - prob.gains * p + prob.noise
    return prob.gains * p / denom


def true_energy(prob: PowerProblem, p: np.ndarray) -> np.ndarray:
    """Exact per-user energy at powers p (joules)."""
    e = prob.e_local.copy()
    sending = prob.offload_bits > 0
    if np.any(sending):
        gamma = sinr_vector(prob, p)
        r = prob.bandwidth * log2_1p(gamma)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_off = np.where(r > 0, p * prob.offload_bits / r, np.inf)
        e = e + np.where(sending, e_off, 0.0)
    return e


def interference(prob: PowerProblem, p: np.ndarray) -> np.ndarray:
    total = float(np.dot(prob.gains, p))
    return total - prob.gains * p + prob.noise


def f_denominator(prob: PowerProblem, q: np.ndarray, a: np.ndarray,
                  b: np.ndarray) -> np.ndarray:
    """Surrogate rate W*[b + a log2(gain) + a q - a log2(interference)] (bps)."""
    p = np.exp2(q)
    i_term = interference(prob, p)
    return prob.bandwidth * (b + a * (np.log2(prob.gains) + q - np.log2(i_term)))


def surrogate_energy(prob: PowerProblem, q: np.ndarray, a: np.ndarray,
                     b: np.ndarray) -> np.ndarray:
    """Upper-bound energy at log-powers q; infeasible entries become +inf."""
    f_d = f_denominator(prob, q, a, b)
    num = np.exp2(q) * prob.offload_bits
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(f_d > 0, num / f_d, np.inf)
    return prob.e_local + np.where(prob.offload_bits > 0, frac, 0.0)


def eta_star(prob: PowerProblem, q: np.ndarray, a: np.ndarray,
             b: np.ndarray) -> np.ndarray:
    """Closed-form auxiliary update sqrt(2^q oS) / f_d."""
    f_d = f_denominator(prob, q, a, b)
    if np.any(f_d <= 0):
        raise PowerControlError("surrogate rate is nonpositive at the anchor")
    return np.sqrt(np.exp2(q) * prob.offload_bits) / f_d


# ---------------------------------------------------------------------------
# inner convex solve

def _transformed_objective(prob, q, eta, a, b, mu):
    f_d = f_denominator(prob, q, a, b)
    val = float(np.sum(prob.e_local
                       + 2.0 * eta * np.sqrt(np.exp2(q) * prob.offload_bits)
                       - eta ** 2 * f_d))
    if prob.rate_floors is not None and mu > 0:
        gap = np.maximum(prob.rate_floors - f_d, 0.0) / prob.bandwidth
        val += mu * float(np.sum(gap ** 2))
    return val


def _project(prob: PowerProblem, q: np.ndarray) -> np.ndarray:
    q_lo = np.log2(P_FLOOR_W)
    q = np.minimum(np.maximum(q, q_lo), np.log2(prob.p_max))
    room = prob.budget_total - prob.budget_static
    if prob.budget_coeff > 0:
        k = q.shape[0]
        if prob.budget_coeff * k * prob.p_max > room:   # cap can ever bind
            used = prob.budget_coeff * float(np.exp2(q).sum())
            if used > room:
                q = q + np.log2(max(room, P_FLOOR_W) / used)
                q = np.maximum(q, q_lo)
    return q


@njit(cache=True)
def _kernel_project(q, q_lo, q_hi, room, coeff, check_budget):
    k = q.shape[0]
    for i in range(k):
        if q[i] < q_lo:
            q[i] = q_lo
        elif q[i] > q_hi:
            q[i] = q_hi
    if check_budget:
        used = 0.0
        for i in range(k):
            used += coeff * 2.0 ** q[i]
        if used > room:
            shift = np.log2(max(room, 1e-300) / used)
            for i in range(k):
                q[i] = max(q[i] + shift, q_lo)


@njit(cache=True)
def _kernel_vgc(q, gains, noise, w, a, c1, w1, eta2, floors, mu,
                grad, curv):
    """Transformed-bound value (without the constant local part), gradient
    and a diagonal curvature estimate, in one interference pass."""
    k = q.shape[0]
    ln2 = 0.6931471805599453
    tot = 0.0
    p = np.empty(k)
    gp = np.empty(k)
    for i in range(k):
        p[i] = 2.0 ** q[i]
        gp[i] = gains[i] * p[i]
        tot += gp[i]
    val = 0.0
    s_sum = 0.0
    s = np.empty(k)
    for i in range(k):
        i_term = tot - gp[i] + noise[i]
        f_d = w * (c1[i] + a[i] * q[i] - a[i] * np.log2(i_term))
        sqrt_term = w1[i] * np.sqrt(p[i])
        val += sqrt_term - eta2[i] * f_d
        weight = eta2[i]
        cv = 0.25 * ln2 * ln2 * sqrt_term
        if mu > 0.0:
            gap = floors[i] - f_d
            if gap > 0.0:
                val += (mu / (w * w)) * gap * gap
                weight += (2.0 * mu / (w * w)) * gap
                cv += 2.0 * mu * a[i] * a[i]
        s[i] = weight * a[i] / i_term
        s_sum += s[i]
        grad[i] = 0.5 * ln2 * sqrt_term - w * a[i] * weight
        curv[i] = cv
    for i in range(k):
        grad[i] += w * gp[i] * (s_sum - s[i])
    return val


@njit(cache=True)
def _kernel_inner(q, gains, noise, w, a, c1, w1, eta2, floors, mu,
                  q_lo, q_hi, room, coeff, check_budget, iters, tol):
    k = q.shape[0]
    _kernel_project(q, q_lo, q_hi, room, coeff, check_budget)
    grad = np.empty(k)
    curv = np.empty(k)
    direction = np.empty(k)
    grad_cand = np.empty(k)
    curv_cand = np.empty(k)
    q_cand = np.empty(k)
    obj = _kernel_vgc(q, gains, noise, w, a, c1, w1, eta2, floors, mu,
                      grad, curv)
    step = 1.0
    for _ in range(iters):
        cmax = 0.0
        for i in range(k):
            if curv[i] > cmax:
                cmax = curv[i]
        cfloor = 1e-9 * cmax + 1e-300
        moved = False
        for i in range(k):
            d = grad[i] / max(curv[i], cfloor)
            if d > 4.0:
                d = 4.0
            elif d < -4.0:
                d = -4.0
            direction[i] = d
            if d != 0.0:
                moved = True
        if not moved:
            break
        improved = False
        trial = step
        gain = 0.0
        for _bt in range(40):
            for i in range(k):
                q_cand[i] = q[i] - trial * direction[i]
            _kernel_project(q_cand, q_lo, q_hi, room, coeff, check_budget)
            obj_cand = _kernel_vgc(q_cand, gains, noise, w, a, c1, w1, eta2,
                                   floors, mu, grad_cand, curv_cand)
            if obj_cand < obj - 1e-16:
                gain = obj - obj_cand
                for i in range(k):
                    q[i] = q_cand[i]
                    grad[i] = grad_cand[i]
                    curv[i] = curv_cand[i]
                obj = obj_cand
                improved = True
                break
            trial *= 0.5
        if not improved:
            break
        step = min(trial * 2.0, 1.0)
        if gain <= tol * max(abs(obj), 1.0):
            break
    return q


def inner_solve(prob: PowerProblem, q0: np.ndarray, eta: np.ndarray,
                a: np.ndarray, b: np.ndarray, iters: int = 60,
                mu: float = 0.0, tol: float = 1e-10) -> np.ndarray:
    """Curvature-scaled projected descent with backtracking on the
    transformed bound.

    Returns a point whose objective does not exceed the starting point's and
    which satisfies the power box and the surface budget to within 1e-8.
    """
    if prob.rate_floors is None:
        mu = 0.0
        floors = np.zeros_like(q0)
    else:
        floors = np.asarray(prob.rate_floors, dtype=float)
    c1 = b + a * np.log2(prob.gains)
    w1 = 2.0 * eta * np.sqrt(prob.offload_bits)
    eta2 = eta * eta
    k = q0.shape[0]
    room = prob.budget_total - prob.budget_static
    check_budget = (prob.budget_coeff > 0
                    and prob.budget_coeff * k * prob.p_max > room)
    return _kernel_inner(
        np.array(q0, dtype=float), np.asarray(prob.gains, dtype=float),
        np.asarray(prob.noise, dtype=float), float(prob.bandwidth),
        np.asarray(a, dtype=float), c1, w1, eta2, floors, float(mu),
        float(np.log2(P_FLOOR_W)), float(np.log2(prob.p_max)), float(room),
        float(prob.budget_coeff), check_budget, int(iters), float(tol))


# ---------------------------------------------------------------------------
# outer loop

def merit(prob: PowerProblem, p: np.ndarray, mu: float) -> float:
    """True energy plus the hinge on unmet rate floors (zero when none)."""
    val = float(np.sum(true_energy(prob, p)))
    if prob.rate_floors is not None and mu > 0:
        gamma = sinr_vector(prob, p)
        r = prob.bandwidth * log2_1p(gamma)
        gap = np.maximum(prob.rate_floors - r, 0.0) / prob.bandwidth
        val += mu * float(np.sum(gap ** 2))
    return val


def initial_powers(prob: PowerProblem) -> np.ndarray:
    """Half of the per-user cap, reduced to fit inside the surface budget."""
    k = prob.gains.shape[0]
    room = prob.budget_total - prob.budget_static
    cap = prob.p_max
    if prob.budget_coeff > 0 and room > 0:
        cap = min(cap, room / (prob.budget_coeff * k))
    return np.full(k, 0.5 * max(cap, P_FLOOR_W))


def sfp_solve(prob: PowerProblem, params: SfpParams | None = None,
              p_init: np.ndarray | None = None,
              latency_mu: float = 0.0) -> SfpResult:
    """Run the alternating surrogate refinement until the merit stalls.

    Users with nothing to send or a dead channel are held at zero power.
    When the static surface draw already exhausts the budget no positive
    power is feasible; the minimum-power vector is returned with a warning.
    """
    params = params or SfpParams()
    k = prob.gains.shape[0]
    active = (prob.offload_bits > 0) & (prob.gains > 0)
    powers = np.zeros(k)

    room = prob.budget_total - prob.budget_static
    if room <= 0:
        res = SfpResult(powers=powers, budget_warning=True)
        res.energy = float(np.sum(true_energy(prob, powers)))
        res.merit_trace = [res.energy]
        return res
    if not np.any(active):
        res = SfpResult(powers=powers, converged=True)
        res.energy = float(np.sum(true_energy(prob, powers)))
        res.merit_trace = [res.energy]
        return res

    sub = PowerProblem(
        gains=prob.gains[active], noise=prob.noise[active],
        offload_bits=prob.offload_bits[active], e_local=prob.e_local[active],
        bandwidth=prob.bandwidth, p_max=prob.p_max,
        budget_total=prob.budget_total, budget_coeff=prob.budget_coeff,
        budget_static=prob.budget_static,
        rate_floors=None if prob.rate_floors is None else prob.rate_floors[active],
    )
    mu = latency_mu if sub.rate_floors is not None else 0.0

    p = initial_powers(sub)
    if p_init is not None:
        # a warm start is only useful where the user was actually on last
        # time; switched-off entries rejoin at the default probe level, else
        # the surrogate anchors in the dead zone where the rate slope
        # vanishes and no floor can pull the power back up
        warm = np.clip(np.asarray(p_init, dtype=float)[active], 0.0, prob.p_max)
        p = np.where(warm > 1e-6 * prob.p_max, warm, p)
    q = _project(sub, np.log2(p))
    p = np.exp2(q)

    best = merit(sub, p, mu)
    trace = [best]
    result = SfpResult(powers=powers)
    for tau in range(1, params.max_outer + 1):
        gamma = sinr_vector(sub, p)
        a, b = surrogate_params(gamma)
        eta = eta_star(sub, q, a, b)
        q_new = inner_solve(sub, q, eta, a, b, iters=params.inner_iters,
                            mu=mu, tol=params.inner_tol)
        p_new = np.exp2(q_new)
        cand = merit(sub, p_new, mu)
        if cand <= best:
            q, p, best = q_new, p_new, cand
        trace.append(best)
        result.iterations = tau
        if abs(trace[-1] - trace[-2]) <= params.tolerance_j:
            result.converged = True
            break

    powers[active] = p
    result.powers = powers
    result.merit_trace = trace
    per_user = true_energy(prob, powers)
    # users with a dead channel cannot transmit at all; their radio energy is
    # zero and the unmet deadline is the caller's violation to record
    result.energy = float(np.sum(np.where(np.isfinite(per_user), per_user,
                                          prob.e_local)))
    return result
