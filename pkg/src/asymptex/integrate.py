"""Adaptive Dormand-Prince 5(4) integration of the quasilinear system.

Right-hand sides are compiled into flat "tables": every function that occurs
is a finite sum of atoms ``c * t**(-a0) * prod L_q**e_q * exp(mu t)`` routed
to an output slot.  The stepping loop and the table evaluation run under
numba.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .expansion import ONE, ExpansionResult, FormalSeries, Problem, residual_series
from .osc import GeneratorBasis, LatticeError, OscVector


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"step size underflow at t = {t:.6g}")


class DomainExit(IntegrationError):
    def __init__(self, t, distance, radius):
        self.t = t
        self.distance = distance
        self.radius = radius
        super().__init__(f"trajectory left the ball of radius {radius} at t = {t:.6g} "
                         f"(distance {distance:.3g})")


# tables -------------------------------------------------------------------------------

@dataclass
class Table:
    """Sparse atom table with ``dim`` real outputs.

    An atom is ``c * t**(-a0) * prod L_q(t)**e_q * exp(<key, g> t)`` routed to
    one output slot, where ``g`` are the lattice generators.  Only the real
    part of each atom is accumulated, so atoms with a negative imaginary
    exponent are stored as their conjugates, which halves the work for real
    oscillating data.
    """

    a0: np.ndarray
    logs: np.ndarray
    gens: np.ndarray
    keys: np.ndarray
    kmin: np.ndarray
    kmax: np.ndarray
    s_idx: np.ndarray
    u_idx: np.ndarray
    d_idx: np.ndarray
    coef: np.ndarray
    dim: int

    @classmethod
    def build(cls, entries, dim: int, basis: GeneratorBasis) -> "Table":
        """``entries``: iterable of ``(a0, logs, key, slot, coef)``."""
        sigs: dict = {}
        keys: dict = {}
        acc: dict = {}
        for a0, logs, key, slot, c in entries:
            key = tuple(int(v) for v in key)
            c = complex(c)
            if basis.exponent(key).imag < 0.0:
                try:
                    key, c = basis.conjugate_key(key), c.conjugate()
                except LatticeError:
                    pass
            sig = (float(a0), tuple(float(x) for x in logs))
            si = sigs.setdefault(sig, len(sigs))
            ui = keys.setdefault(key, len(keys))
            acc[(si, ui, slot)] = acc.get((si, ui, slot), 0j) + c
        depth = max((len(s[1]) for s in sigs), default=0)
        a0 = np.zeros(max(len(sigs), 1))
        logs = np.zeros((max(len(sigs), 1), depth))
        for (sa0, slogs), i in sigs.items():
            a0[i] = sa0
            logs[i, :len(slogs)] = slogs
        G = basis.dim
        key_arr = np.zeros((max(len(keys), 1), G), dtype=np.int64)
        for key, i in keys.items():
            key_arr[i] = key
        nz = [k for k, c in acc.items() if c != 0]
        return cls(
            a0=a0,
            logs=logs,
            gens=np.array(basis.generators, dtype=np.complex128),
            keys=key_arr,
            kmin=np.minimum(key_arr.min(axis=0), 0),
            kmax=np.maximum(key_arr.max(axis=0), 0),
            s_idx=np.array([k[0] for k in nz], dtype=np.int64),
            u_idx=np.array([k[1] for k in nz], dtype=np.int64),
            d_idx=np.array([k[2] for k in nz], dtype=np.int64),
            coef=np.array([acc[k] for k in nz], dtype=np.complex128),
            dim=dim,
        )

    @classmethod
    def from_series(cls, series: FormalSeries, dim: int, basis: GeneratorBasis,
                    slot_offset: int = 0) -> "Table":
        return cls.build(series_entries(series, slot_offset), dim, basis)

    def as_tuple(self):
        return (self.a0, self.logs, self.gens, self.keys, self.kmin, self.kmax,
                self.s_idx, self.u_idx, self.d_idx, self.coef)

    def workspace(self):
        width = int((self.kmax - self.kmin).max(initial=0)) + 1
        return (np.empty(self.a0.shape[0]),
                np.empty(self.keys.shape[0], dtype=np.complex128),
                np.empty((self.gens.shape[0], width), dtype=np.complex128))

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.dim))
        ws = self.workspace()
        tab = self.as_tuple()
        for i, ti in enumerate(t):
            _table_eval(ti, tab, ws, out[i])
        return out


def series_entries(series: FormalSeries, slot_offset: int = 0):
    """Atoms of a vector series."""
    for mono, coeff in series.terms.items():
        pl = mono.power_log(series.eps) if not mono.is_one else None
        pl_terms = pl.terms.items() if pl is not None else [((0, ()), 1.0)]
        for (a0, logs), plc in pl_terms:
            for comp, fn in enumerate(coeff):
                for key, c in fn.terms.items():
                    yield (a0, logs, key, slot_offset + comp, plc * c)


def oscvector_entries(vec: OscVector, slot_offset=0, a0=0.0, logs=(), scale=1.0):
    for comp, fn in enumerate(vec):
        for key, c in fn.terms.items():
            yield (a0, logs, key, slot_offset + comp, scale * c)


@numba.njit(cache=True)
def _table_eval(t, tab, ws, out):
    a0, logs, gens, keys, kmin, kmax, s_idx, u_idx, d_idx, coef = tab
    pl, ex, pw = ws
    depth = logs.shape[1]
    lnt = math.log(t)
    lnL0 = 0.0
    lnL1 = 0.0
    if depth >= 1:
        lnL0 = math.log(lnt)
    if depth >= 2:
        lnL1 = math.log(math.log(lnt))
    for s in range(a0.shape[0]):
        arg = -a0[s] * lnt
        if depth >= 1:
            arg += logs[s, 0] * lnL0
        if depth >= 2:
            arg += logs[s, 1] * lnL1
        if depth >= 3:
            cur = math.log(math.log(lnt))
            for q in range(2, depth):
                cur = math.log(cur)
                arg += logs[s, q] * math.log(cur)
        pl[s] = math.exp(arg)
    for g in range(gens.shape[0]):
        x = cmath.exp(gens[g] * t)
        z = -kmin[g]
        pw[g, z] = 1.0
        for k in range(1, kmax[g] + 1):
            pw[g, z + k] = pw[g, z + k - 1] * x
        if kmin[g] < 0:
            xi = 1.0 / x
            for k in range(1, z + 1):
                pw[g, z - k] = pw[g, z - k + 1] * xi
    for u in range(keys.shape[0]):
        v = 1.0 + 0.0j
        for g in range(gens.shape[0]):
            k = keys[u, g]
            if k != 0:
                v *= pw[g, k - kmin[g]]
        ex[u] = v
    out[:] = 0.0
    for i in range(coef.shape[0]):
        c = coef[i]
        e = ex[u_idx[i]]
        out[d_idx[i]] += pl[s_idx[i]] * (c.real * e.real - c.imag * e.imag)


# compiled right-hand side -------------------------------------------------------------------

@dataclass
class CompiledField:
    """``r' = A r + G(t) + sum_j W_j(t) * (y**alpha_j - [S(t)**alpha_j])``.

    In direct mode ``y = r`` and ``S`` is absent; in shifted mode
    ``y = S(t) + r`` and the base values are subtracted.  ``G``, ``S`` and
    the weights ``W`` live in one table whose slots are laid out as
    ``[G (n) | S (n) | W (J n)]``.  ``center`` gives the offset for the
    domain check ``||r + center(t)|| <= radius``.
    """

    A: np.ndarray
    table: Table
    alphas: np.ndarray
    center: Table
    radius: float
    shifted: bool
    description: str = ""

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def forcing(self, t):
        return self.table(t)[:, :self.n]

    def base(self, t):
        return self.table(t)[:, self.n:2 * self.n]

    def weights(self, t):
        return self.table(t)[:, 2 * self.n:]

    def workspace(self):
        return self.table.workspace() + (np.empty(self.table.dim),)

    def __call__(self, t, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(self.n)
        _field_rhs(float(t), r, self.A, self.table.as_tuple(), self.alphas, self.shifted,
                   self.workspace(), out)
        return out


def _nonlinear_entries(p: Problem, slot_offset: int):
    alphas = []
    entries = []
    for eps_l, nl in zip(p.eps, p.nonlinearities):
        base = eps_l.base
        for alpha, coeff in nl.terms.items():
            j = len(alphas)
            alphas.append(alpha)
            entries.extend(oscvector_entries(coeff, slot_offset + j * p.n, base.a0, base.logs,
                                             base.coef))
    return alphas, entries


def _alpha_array(alphas, n):
    return np.array(alphas if alphas else [[0] * n], dtype=np.int64)


def compile_problem(p: Problem, phi0: OscVector | None = None) -> CompiledField:
    """Direct field ``y' = A y + f + sum eps_l f_l(t, y)``."""
    from .expansion import solve_phi0
    phi0 = solve_phi0(p) if phi0 is None else phi0
    n = p.n
    alphas, entries = _nonlinear_entries(p, 2 * n)
    J = max(len(alphas), 1)
    table = Table.build(list(oscvector_entries(p.f)) + entries, (2 + J) * n, p.basis)
    return CompiledField(
        A=np.ascontiguousarray(p.A),
        table=table,
        alphas=_alpha_array(alphas, n),
        center=Table.build(oscvector_entries(phi0, scale=-1.0), n, p.basis),
        radius=p.a,
        shifted=False,
        description="direct",
    )


def compile_error_field(p: Problem, e: ExpansionResult, up_to: int | None = None) -> CompiledField:
    """Field for ``r = y - s(t)``: ``r' = A r + g(t) + sum eps_l [f_l(s + r) - f_l(s)]``."""
    n = p.n
    s = e.series(up_to)
    g = residual_series(p, e, up_to)
    delta = FormalSeries(p.eps, {m: c for m, c in s.terms.items() if not m.is_one})
    alphas, entries = _nonlinear_entries(p, 2 * n)
    J = max(len(alphas), 1)
    table = Table.build(list(series_entries(g)) + list(series_entries(s, n)) + entries,
                        (2 + J) * n, p.basis)
    return CompiledField(
        A=np.ascontiguousarray(p.A),
        table=table,
        alphas=_alpha_array(alphas, n),
        center=Table.from_series(delta, n, p.basis),
        radius=p.a,
        shifted=True,
        description=f"error(k={e.k if up_to is None else up_to})",
    )


@numba.njit(cache=True)
def _field_rhs(t, r, A, tab, alphas, shifted, ws, out):
    vals = ws[3]
    _table_eval(t, tab, (ws[0], ws[1], ws[2]), vals)
    n = r.shape[0]
    for i in range(n):
        acc = vals[i]
        for j in range(n):
            acc += A[i, j] * r[j]
        out[i] = acc
    for jt in range(alphas.shape[0]):
        my = 1.0
        ms = 1.0
        for q in range(n):
            a = alphas[jt, q]
            if a:
                if shifted:
                    sq = vals[n + q]
                    my *= (sq + r[q]) ** a
                    ms *= sq ** a
                else:
                    my *= r[q] ** a
        diff = my - ms if shifted else my
        if diff != 0.0:
            off = 2 * n + jt * n
            for i in range(n):
                out[i] += vals[off + i] * diff


# Dormand-Prince 5(4) ------------------------------------------------------------------------

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (Shampine's 4th order interpolant)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

STATUS_OK, STATUS_UNDERFLOW, STATUS_DOMAIN, STATUS_MAXSTEPS, STATUS_NONFINITE = 0, 1, 2, 3, 4


@numba.njit(cache=True)
def _rms_norm(x, scale):
    acc = 0.0
    for i in range(x.shape[0]):
        v = x[i] / scale[i]
        acc += v * v
    return math.sqrt(acc / x.shape[0])


@numba.njit(cache=True)
def _dopri54(t0, y0, t_eval, rtol, atol, h_init, max_steps,
             A, tab, alphas, shifted, ctab, radius, ws, cws,
             Cc, Aa, Bb, Ee, Pp):
    n = y0.shape[0]
    m = t_eval.shape[0]
    Y = np.full((m, n), np.nan)
    K = np.empty((7, n))
    y = y0.copy()
    y_new = np.empty(n)
    ytmp = np.empty(n)
    err_vec = np.empty(n)
    scale = np.empty(n)
    center = np.empty(n)
    t = t0
    t_end = t_eval[m - 1]
    _field_rhs(t, y, A, tab, alphas, shifted, ws, K[0])
    nfev = 1
    # initial step (Hairer & Wanner, II.4)
    if h_init > 0.0:
        h = h_init
    else:
        for i in range(n):
            scale[i] = atol + rtol * abs(y[i])
        d0 = _rms_norm(y, scale)
        d1 = _rms_norm(K[0], scale)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        for i in range(n):
            ytmp[i] = y[i] + h0 * K[0, i]
        _field_rhs(t + h0, ytmp, A, tab, alphas, shifted, ws, K[1])
        nfev += 1
        for i in range(n):
            err_vec[i] = K[1, i] - K[0, i]
        d2 = _rms_norm(err_vec, scale) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h0, h1)
    h = min(h, t_end - t0) if t_end > t0 else h
    k_out = 0
    while k_out < m and t_eval[k_out] <= t0:
        for i in range(n):
            Y[k_out, i] = y[i]
        k_out += 1
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    safe = 0.9
    facold = 1e-4
    last_rejected = False
    naccept = 0
    nreject = 0
    status = STATUS_OK
    t_fail = np.nan
    while k_out < m:
        if naccept + nreject >= max_steps:
            status = STATUS_MAXSTEPS
            t_fail = t
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            t_fail = t
            break
        if t + h > t_end:
            h = t_end - t
        for s in range(1, 6):
            for i in range(n):
                acc = y[i]
                for j in range(s):
                    acc += h * Aa[s, j] * K[j, i]
                ytmp[i] = acc
            _field_rhs(t + Cc[s] * h, ytmp, A, tab, alphas, shifted, ws, K[s])
        for i in range(n):
            acc = y[i]
            for j in range(6):
                acc += h * Bb[j] * K[j, i]
            y_new[i] = acc
        _field_rhs(t + h, y_new, A, tab, alphas, shifted, ws, K[6])
        nfev += 6
        finite = True
        for i in range(n):
            acc = 0.0
            for j in range(7):
                acc += Ee[j] * K[j, i]
            err_vec[i] = h * acc
            scale[i] = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            if not math.isfinite(y_new[i]):
                finite = False
        if not finite:
            h *= 0.25
            nreject += 1
            last_rejected = True
            continue
        err = _rms_norm(err_vec, scale)
        fac11 = err ** expo1 if err > 0.0 else 0.0
        if err <= 1.0:
            fac = fac11 / facold ** beta
            fac = max(0.1, min(5.0, fac / safe))
            h_next = h / fac
            if last_rejected:
                h_next = min(h_next, h)
            facold = max(err, 1e-4)
            t_new = t + h
            # dense output on (t, t_new]
            while k_out < m and t_eval[k_out] <= t_new:
                x = (t_eval[k_out] - t) / h
                for i in range(n):
                    q = 0.0
                    for j in range(7):
                        kj = K[j, i]
                        q += kj * (Pp[j, 0] * x + Pp[j, 1] * x * x
                                   + Pp[j, 2] * x * x * x + Pp[j, 3] * x * x * x * x)
                    Y[k_out, i] = y[i] + h * q
                k_out += 1
            t = t_new
            for i in range(n):
                y[i] = y_new[i]
                K[0, i] = K[6, i]
            naccept += 1
            last_rejected = False
            h = h_next
            if radius > 0.0:
                _table_eval(t, ctab, cws, center)
                dist = 0.0
                for i in range(n):
                    v = y[i] + center[i]
                    dist += v * v
                dist = math.sqrt(dist)
                if dist > radius:
                    status = STATUS_DOMAIN
                    t_fail = t
                    break
        else:
            h = h / min(5.0, fac11 / safe)
            nreject += 1
            last_rejected = True
    return Y, y, status, t_fail, nfev, naccept, nreject


@dataclass
class Trajectory:
    """Samples of a numerical solution."""

    t: np.ndarray
    y: np.ndarray
    rtol: float
    atol: float
    n_accepted: int
    n_rejected: int
    n_fev: int
    field_name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")


def integrate_field(fld: CompiledField, y0, t_span, t_eval=None, rtol=1e-10, atol=1e-20,
                    max_steps=50_000_000, check_domain=True) -> Trajectory:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 101)
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0) or t_eval[0] < t0 or t_eval[-1] > t1:
        raise ValueError("t_eval must be strictly increasing inside t_span")
    if t_eval[-1] < t1:
        t_eval_int = np.append(t_eval, t1)
    else:
        t_eval_int = t_eval
    y0 = np.array(y0, dtype=float)
    if y0.shape != (fld.n,):
        raise ValueError(f"initial state must have shape ({fld.n},)")
    radius = fld.radius if check_domain else -1.0
    if check_domain:
        c0 = fld.center(t0)[0]
        if np.linalg.norm(y0 + c0) > fld.radius:
            raise DomainExit(t0, float(np.linalg.norm(y0 + c0)), fld.radius)
    ws = fld.workspace()
    cws = fld.center.workspace()
    Y, y_last, status, t_fail, nfev, nacc, nrej = _dopri54(
        t0, y0, t_eval_int, float(rtol), float(atol), 0.0, int(max_steps),
        fld.A, fld.table.as_tuple(),
        fld.alphas, fld.shifted, fld.center.as_tuple(), float(radius), ws, cws,
        _C, _A, _B, _E, _P)
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflow(t_fail)
    if status == STATUS_DOMAIN:
        dist = float(np.linalg.norm(y_last + fld.center(t_fail)[0]))
        raise DomainExit(t_fail, dist, fld.radius)
    if status == STATUS_MAXSTEPS:
        raise IntegrationError(f"step budget exhausted at t = {t_fail:.6g}")
    Y = Y[: t_eval.size]
    if not np.all(np.isfinite(Y)):
        raise IntegrationError("non-finite values in trajectory")
    return Trajectory(t_eval, Y, rtol, atol, nacc, nrej, nfev, fld.description)


def integrate(p: Problem, y0, t_span, t_eval=None, rtol=1e-10, atol=1e-20, **kw) -> Trajectory:
    """Integrate the full system from ``y0`` at ``t_span[0]``."""
    return integrate_field(compile_problem(p), y0, t_span, t_eval, rtol, atol, **kw)
