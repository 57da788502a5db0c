"""Two-player complete-information entry game with correlated shocks.

Firm ``i`` earns ``beta_i + Delta_i a_{-i} + eps_i`` from entering and zero
otherwise, ``(eps_1, eps_2)`` standard bivariate normal with correlation
``rho`` and ``Delta_i <= 0``.  Outcomes are pure-strategy Nash equilibria; in
the region where both (1, 0) and (0, 1) are equilibria, (1, 0) is selected
with probability ``s``.

``theta = (beta1, beta2, Delta1, Delta2, rho, s)`` on the box
``[-1, 2]^2 x [-2, 0]^2 x [0, 1]^2``.  Outcome cells are ordered
(00, 10, 01, 11) throughout.

Equivalence sets ``M(theta)`` and profiles are computed numerically by
minimizing the Kullback-Leibler divergence between cell distributions with a
batched, box-projected Levenberg-Marquardt iteration on the cell probabilities
(finite-difference Jacobian).
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..criterion import Criterion, CriterionKind, DataSet
from ..params import ParamSpace, SubvectorMap, flat_prior
from .base import GameCellProbs, ModelSpec, TrueSets
from .bivariate_normal import bvn_lower

NAMES = ("beta1", "beta2", "Delta1", "Delta2", "rho", "s")
LOWER = np.array([-1.0, -1.0, -2.0, -2.0, 0.0, 0.0])
UPPER = np.array([2.0, 2.0, 0.0, 0.0, 1.0, 1.0])
SPACE = ParamSpace(LOWER, UPPER, names=NAMES)
TRUTH = np.array([0.2, 0.2, -0.5, -0.5, 0.5, 0.5])
KL_TOL = 1e-7


class OracleError(RuntimeError):
    """The profiled divergence is not zero even at the particle's own value."""


def game_cell_probs(theta) -> GameCellProbs:
    """Outcome probabilities; ``theta`` may be ``(6,)`` or ``(m, 6)``."""
    t = np.asarray(theta, dtype=float)
    b1, b2, d1, d2, rho, s = (t[..., i] for i in range(6))
    a1, a2 = -b1, -b2
    c1, c2 = -b1 - d1, -b2 - d2
    # four joint CDF values cover every rectangle we need
    f = bvn_lower(np.stack([a1, c1, a1, c1]), np.stack([a2, c2, c2, a2]), np.stack([rho] * 4))
    f_aa, f_cc, f_ac, f_ca = f
    g00 = f_aa
    g11 = 1.0 - special.ndtr(c1) - special.ndtr(c2) + f_cc
    rect = f_cc - f_ac - f_ca + f_aa
    g10 = special.ndtr(c2) - f_cc + f_ca - f_aa + s * rect
    g00, g10, g11 = (np.clip(v, 0.0, 1.0) for v in (g00, g10, g11))
    g01 = np.clip(1.0 - g00 - g10 - g11, 0.0, 1.0)
    return GameCellProbs(g00, g10, g01, g11)


def cell_array(thetas) -> np.ndarray:
    return game_cell_probs(thetas).as_array()


def counts_of(outcomes) -> np.ndarray:
    """Counts of the cells (00, 10, 01, 11) from an ``(n, 2)`` array of entry decisions."""
    o = np.asarray(outcomes, dtype=np.int64)
    code = o[:, 0] + 2 * o[:, 1]  # 00 -> 0, 10 -> 1, 01 -> 2, 11 -> 3
    return np.bincount(code, minlength=4).astype(float)


def make_data(outcomes) -> DataSet:
    o = np.asarray(outcomes, dtype=np.int64)
    if o.ndim != 2 or o.shape[1] != 2 or np.any((o < 0) | (o > 1)):
        raise ValueError("game outcomes must be (n, 2) arrays of 0/1 entry decisions")
    return DataSet.from_rows(o, {"counts": counts_of(o)})


def simulate_game(dgp, n: int, seed) -> DataSet:
    """Draw shocks, solve for pure-strategy equilibria and select in the multiplicity region."""
    theta = np.asarray([dgp[k] for k in NAMES] if isinstance(dgp, dict) else dgp, dtype=float)
    b1, b2, d1, d2, rho, s = theta
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    e1 = z[:, 0]
    e2 = rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1]
    u = rng.uniform(size=n)
    a1, a2 = -b1, -b2
    c1, c2 = -b1 - d1, -b2 - d2
    out = np.zeros((n, 2), dtype=np.int64)
    both_enter = (e1 >= c1) & (e2 >= c2)
    none_enter = (e1 < a1) & (e2 < a2)
    eq10 = (e1 >= a1) & (e2 < c2)
    eq01 = (e1 < c1) & (e2 >= a2)
    multi = eq10 & eq01
    pick10 = (eq10 & ~multi) | (multi & (u < s))
    pick01 = (eq01 & ~multi) | (multi & (u >= s))
    out[both_enter] = (1, 1)
    out[none_enter] = (0, 0)
    out[pick10] = (1, 0)
    out[pick01] = (0, 1)
    return make_data(out)


def loglik_from_cells(cells, freqs) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sum(special.xlogy(freqs, cells), axis=-1)
    return np.where(np.isnan(out), -np.inf, out)


def game_loglik(theta, data: DataSet):
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    out = loglik_from_cells(cell_array(t), data.stats["counts"] / data.n)
    out = np.where(SPACE.contains(t), out, -np.inf)
    return float(out[0]) if np.ndim(theta) == 1 else out


def kl_divergence(p, q) -> np.ndarray:
    """``sum p log(p / q)`` over the last axis with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = special.xlogy(p, p) - special.xlogy(p, q)
    terms = np.where(np.isnan(terms), np.inf, terms)
    return np.maximum(np.sum(terms, axis=-1), 0.0)


def minimize_kl(
    targets,
    theta0,
    free,
    max_iter: int = 200,
    tol: float = 1e-15,
    lower=LOWER,
    upper=UPPER,
):
    """Minimize ``KL(targets[i] || p(theta_i))`` over the coordinates ``free``.

    Batched Levenberg-Marquardt on the cell probabilities with weights
    ``1 / p``, which is Fisher scoring for the divergence.  Steps are
    projected on the box; coordinates outside ``free`` stay fixed.

    Returns
    -------
    theta : (m, 6) array
    kl : (m,) array of achieved divergences
    """
    p = np.atleast_2d(np.asarray(targets, dtype=float))
    th = np.array(np.atleast_2d(theta0), dtype=float)
    m = th.shape[0]
    if p.shape[0] == 1 and m > 1:
        p = np.repeat(p, m, axis=0)
    free = np.asarray(free, dtype=int)
    nf = free.size
    lo, hi = lower[free], upper[free]
    th[:, free] = np.clip(th[:, free], lo, hi)
    q = cell_array(th)
    f = kl_divergence(p, q)
    lam = np.full(m, 1e-3)
    active = f > tol
    h = 1e-7 * np.maximum(1.0, hi - lo)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        t_a, q_a, p_a = th[idx], q[idx], p[idx]
        # one-sided differences pointing into the box
        x = t_a[:, free]
        step = np.where(x + h > hi, -h, h)
        pert = np.repeat(t_a[None, :, :], nf, axis=0)
        for j in range(nf):
            pert[j, :, free[j]] += step[:, j]
        qj = cell_array(pert.reshape(-1, 6)).reshape(nf, idx.size, 4)
        jac = np.transpose((qj - q_a[None]) / step.T[:, :, None], (1, 2, 0))  # (k, 4, nf)
        wts = 1.0 / np.maximum(q_a, 1e-12)
        jtw = jac * wts[:, :, None]
        H = np.einsum("kci,kcj->kij", jtw, jac)
        g = np.einsum("kci,kc->ki", jtw, p_a - q_a)
        diag = np.einsum("kii->ki", H)
        A = H + lam[idx, None, None] * (np.eye(nf) * (diag[:, None, :] + 1e-10))
        try:
            delta = np.linalg.solve(A, g[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            delta = np.stack([np.linalg.lstsq(A[i], g[i], rcond=None)[0] for i in range(idx.size)])
        new = t_a.copy()
        new[:, free] = np.clip(x + delta, lo, hi)
        q_new = cell_array(new)
        f_new = kl_divergence(p_a, q_new)
        better = f_new < f[idx]
        bi = idx[better]
        th[bi], q[bi], f[bi] = new[better], q_new[better], f_new[better]
        lam[bi] = np.maximum(lam[bi] / 3.0, 1e-12)
        wi = idx[~better]
        lam[wi] *= 4.0
        # stop when converged, or when damping has blown up (no further progress possible)
        active[idx] = (f[idx] > tol) & (lam[idx] < 1e10)
    return th, f


def profiled_kl(targets, mu, index: int, starts, max_iter: int = 200):
    """``inf_eta KL(targets || p(mu, eta))`` from several starting points.

    ``targets`` (m, 4), ``mu`` (m,), ``starts`` (m, s, 6).  Returns the best
    divergence and its minimizer for each row.
    """
    targets = np.atleast_2d(targets)
    starts = np.asarray(starts, dtype=float)
    m, n_s, _ = starts.shape
    init = starts.reshape(m * n_s, 6).copy()
    init[:, index] = np.repeat(np.asarray(mu, dtype=float), n_s)
    free = [i for i in range(6) if i != index]
    th, f = minimize_kl(np.repeat(targets, n_s, axis=0), init, free, max_iter=max_iter)
    f = f.reshape(m, n_s)
    best = np.argmin(f, axis=1)
    return f[np.arange(m), best], th.reshape(m, n_s, 6)[np.arange(m), best]


def game_m_oracle_batch(
    thetas,
    index: int,
    tol: float = KL_TOL,
    xtol: float = 1e-4,
    max_bisect: int = 60,
    n_random: int = 0,
    seed=0,
):
    """Equivalence-set endpoints of coordinate ``index`` for every row of ``thetas``.

    For each side, bisection between ``theta[index]`` (divergence zero) and
    the box bound on whether ``inf_eta KL(p_theta || p_(mu, eta)) < tol``.
    The inner search warm-starts from the last accepted minimizer and from
    ``theta`` itself, plus ``n_random`` uniform draws.
    """
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    m = th.shape[0]
    targets = cell_array(th)
    rng = np.random.default_rng(seed)
    out = []
    for bound in (LOWER[index], UPPER[index]):
        inside = th[:, index].copy()
        warm = th.copy()
        edge = np.full(m, bound)

        def solve(mu, k):
            starts = [warm[k], th[k]]
            if n_random:
                starts += list(SPACE.uniform(rng, k.size * n_random).reshape(n_random, k.size, 6))
            return profiled_kl(targets[k], mu, index, np.stack(starts, axis=1))

        f_edge, _ = solve(edge, np.arange(m))
        at_edge = f_edge < tol
        outside = edge.copy()
        inside[at_edge] = bound
        pending = ~at_edge
        for _ in range(max_bisect):
            if not np.any(pending) or np.all(np.abs(outside - inside)[pending] <= xtol):
                break
            k = np.flatnonzero(pending & (np.abs(outside - inside) > xtol))
            mid = 0.5 * (inside[k] + outside[k])
            f_mid, arg_mid = solve(mid, k)
            ok = f_mid < tol
            inside[k[ok]] = mid[ok]
            warm[k[ok]] = arg_mid[ok]
            outside[k[~ok]] = mid[~ok]
        out.append(inside)
    return out[0], out[1]


def game_m_oracle(theta_b, sub_index: int, tol: float = KL_TOL, **kw):
    """Scalar version of :func:`game_m_oracle_batch` returning ``(lo, hi)``."""
    th = np.atleast_2d(np.asarray(theta_b, dtype=float))
    f0, _ = profiled_kl(cell_array(th), th[:, sub_index], sub_index, th[:, None, :])
    if f0[0] >= tol:
        raise OracleError("profiled divergence is positive at the particle's own value")
    lo, hi = game_m_oracle_batch(th, sub_index, tol, **kw)
    return float(lo[0]), float(hi[0])


def fit_game(data: DataSet, starts=None, n_scan: int = 2000, n_best: int = 16, seed=0):
    """Maximum likelihood by divergence minimization from the best scanned points."""
    p = data.stats["counts"] / data.n
    rng = np.random.default_rng(seed)
    cand = SPACE.uniform(rng, n_scan)
    if starts is not None:
        cand = np.vstack([np.atleast_2d(starts), cand])
    vals = loglik_from_cells(cell_array(cand), p)
    init = cand[np.argsort(-vals)[:n_best]]
    th, f = minimize_kl(p[None, :], init, np.arange(6))
    b = int(np.argmin(f))
    ent = float(np.sum(special.xlogy(p, p)))
    return ent - float(f[b]), th[b]


def game_profile(mu, data: DataSet, seed=0, starts=None, index: int = 2, n_scan: int = 400, n_best: int = 6):
    """``sup_eta`` of the average log-likelihood at each ``mu`` for coordinate ``index``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    p = data.stats["counts"] / data.n
    ent = float(np.sum(special.xlogy(p, p)))
    rng = np.random.default_rng(seed)
    pool = SPACE.uniform(rng, n_scan)
    if starts is not None:
        pool = np.vstack([np.atleast_2d(starts), pool])
    # best pool members at each mu serve as starting points
    init = np.empty((mu.size, n_best, 6))
    for i, v in enumerate(mu):
        cand = pool.copy()
        cand[:, index] = v
        vals = loglik_from_cells(cell_array(cand), p)
        init[i] = cand[np.argsort(-vals)[:n_best]]
    f, _ = profiled_kl(np.repeat(p[None, :], mu.size, axis=0), mu, index, init)
    return ent - f


def game_identified_points(theta0=TRUTH, n_points: int = 200, seed=0, tol: float = 1e-12, index: int = 2):
    """Points of ``Theta_I`` obtained by projecting uniform draws onto it.

    Includes the extreme points in coordinate ``index`` found by the
    equivalence-set oracle.
    """
    theta0 = np.asarray(theta0, dtype=float)
    p0 = cell_array(theta0)
    rng = np.random.default_rng(seed)
    pts = [theta0[None, :]]
    got = 1
    while got < n_points:
        draws = SPACE.uniform(rng, 2 * n_points)
        th, f = minimize_kl(p0[None, :], draws, np.arange(6))
        keep = th[f < tol]
        pts.append(keep)
        got += keep.shape[0]
    lo, hi = game_m_oracle_batch(theta0[None, :], index, tol=1e-10, n_random=8, seed=seed)
    ext = []
    for v in (lo[0], hi[0]):
        f, arg = profiled_kl(p0[None, :], np.array([v]), index, theta0[None, None, :])
        ext.append(arg[0])
    allp = np.vstack([np.vstack(ext), np.vstack(pts)])
    return allp[:n_points]


def _truth_factory():
    cache = {}

    def truth(dgp, n):
        theta0 = np.asarray([dgp[k] for k in NAMES] if isinstance(dgp, dict) else dgp, dtype=float)
        key = tuple(theta0)
        if key not in cache:
            lo, hi = game_m_oracle_batch(theta0[None, :], 2, n_random=8)
            pts = game_identified_points(theta0)
            p0 = cell_array(theta0)

            def pred(t):
                t = np.atleast_2d(t)
                return SPACE.contains(t) & (kl_divergence(p0[None, :], cell_array(t)) < 1e-12)

            cache[key] = TrueSets(pred, (float(lo[0]), float(hi[0])), pts)
        return cache[key]

    return truth


def _loglik_fn(thetas, data):
    return loglik_from_cells(cell_array(thetas), data.stats["counts"] / data.n)


def entry_game_model(index: int = 2) -> ModelSpec:
    """Entry game with the subvector of interest at ``index`` (2 = Delta1, 0 = beta1)."""
    crit = Criterion(CriterionKind.LOG_LIKELIHOOD, _loglik_fn, SPACE, fit=fit_game)
    return ModelSpec(
        name="entry-game",
        space=SPACE,
        criterion=crit,
        prior=flat_prior(SPACE),
        sub=SubvectorMap((index,), 6),
        m_oracle=lambda th: game_m_oracle_batch(th, index),
        simulate=simulate_game,
        truth=_truth_factory(),
        profile_batch=lambda mu, d, seed=0, starts=None: game_profile(mu, d, seed, starts, index),
        quasiconcave=True,
        smc_defaults={"K": 4, "L_blocks": 1},
        default_dgp=dict(zip(NAMES, TRUTH.tolist())),
    )


__all__ = [
    "KL_TOL",
    "OracleError",
    "SPACE",
    "TRUTH",
    "cell_array",
    "entry_game_model",
    "fit_game",
    "game_cell_probs",
    "game_identified_points",
    "game_loglik",
    "game_m_oracle",
    "game_m_oracle_batch",
    "game_profile",
    "kl_divergence",
    "make_data",
    "minimize_kl",
    "profiled_kl",
    "simulate_game",
]
