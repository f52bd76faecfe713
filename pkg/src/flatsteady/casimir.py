"""Casimir functions Q, their inverse derivative q, and assumption checks.

A Casimir model supplies the convex function Q(f) defining the Casimir
functional, together with the declared structural constants (mu1, mu2, mu3,
C1..C4, F0) that the growth/scaling assumptions (Q1)-(Q5) refer to.  The
inverse q of Q' is what shapes the steady state, f0 = q(E0 - E), and its
antiderivative G(s) = int_0^s q gives the planar density through
rho0(r) = 2*pi*G(E0 - U0(r)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InputError, ModelDefinitionError, ConvergenceError

__all__ = [
    "CasimirModel",
    "InverseQ",
    "ValidationReport",
    "validate_assumptions",
    "q_eval",
    "q_antiderivative",
]

_REL_SLACK = 1e-9  # validation slack for floating-point equality cases

# Gauss-Legendre rule reused for the generic antiderivative quadratures
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_GL_U = 0.5 * (_GL_NODES + 1.0)   # nodes on [0, 1]
_GL_W = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class CasimirModel:
    """Convex Casimir function Q with declared assumption constants.

    Built-in kinds are 'polytrope' (Q = c*f^(1+1/mu)) and 'double_power'
    (Q = C1*f^(1+1/mu1) + C2*f^(1+1/mu2)); 'custom' interpolates a
    tabulated Q on a log-spaced f grid with a monotone cubic, which keeps
    Q' monotone and q well defined.
    """

    kind: str
    F0: float = 1.0
    mu1: float = 0.5
    mu2: float = 0.5
    mu3: float = 0.5
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 0.5
    C4: float = 2.0
    mu: Optional[float] = None          # polytrope exponent
    c: Optional[float] = None           # polytrope coefficient
    a1: Optional[float] = None          # double-power raw coefficients
    a2: Optional[float] = None
    f_table: Optional[np.ndarray] = None
    Q_table: Optional[np.ndarray] = None
    _interp: object = field(default=None, repr=False, compare=False)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def polytrope(mu: float, c: float = 1.0, F0: float = 1.0,
                  mu3: Optional[float] = None) -> "CasimirModel":
        """Q(f) = c * f^(1+1/mu), 0 < mu < 1.

        The canonical form has c = 1; the coefficient is exposed for
        generality.
        mu3 defaults to mu ((Q3) then holds with equality); a smaller mu3
        is also admissible and gives a strict scaling inequality.
        """
        if not (0.0 < mu < 1.0):
            raise ModelDefinitionError("polytrope: mu must lie in (0,1)")
        if c <= 0:
            raise ModelDefinitionError("polytrope: coefficient must be positive")
        m3 = mu if mu3 is None else mu3
        e = 1.0 / mu - 1.0  # homogeneity degree of Q''
        return CasimirModel(
            kind="polytrope", F0=F0, mu=mu, c=c,
            mu1=mu, mu2=mu, mu3=m3, C1=c, C2=c,
            C3=0.5 ** e, C4=2.0 ** e,
        )

    @staticmethod
    def double_power(mu1: float, mu2: float, C1: float = 1.0, C2: float = 1.0,
                     F0: float = 1.0) -> "CasimirModel":
        """Q(f) = C1*f^(1+1/mu1) + C2*f^(1+1/mu2), 0 < mu1, mu2 < 1."""
        for m in (mu1, mu2):
            if not (0.0 < m < 1.0):
                raise ModelDefinitionError("double_power: exponents must lie in (0,1)")
        if C1 <= 0 or C2 <= 0:
            raise ModelDefinitionError("double_power: coefficients must be positive")
        mu_big = max(mu1, mu2)
        # single-power upper bound for f <= F0 (used by (Q2))
        C2_decl = (C1 * F0 ** (1.0 / mu1 - 1.0 / mu_big)
                   + C2 * F0 ** (1.0 / mu2 - 1.0 / mu_big))
        e = 1.0 / min(mu1, mu2) - 1.0
        return CasimirModel(
            kind="double_power", F0=F0,
            mu1=mu1, mu2=mu2, mu3=min(mu1, mu2),
            C1=C1, C2=C2_decl, C3=0.5 ** e, C4=2.0 ** e,
            a1=C1, a2=C2,
        )

    @staticmethod
    def custom(f_table, Q_table, F0: float, mu1: float, mu2: float, mu3: float,
               C1: Optional[float] = None, C2: Optional[float] = None,
               C3: float = 0.5, C4: float = 2.0) -> "CasimirModel":
        """Tabulated Q on an increasing f grid.

        The assumption constants C1, C2 default to the tightest values the
        table itself supports (calibrated so (Q1) and (Q2) hold with
        equality at the worst tabulated point); pass explicit values to
        declare stronger constants.
        """
        f = np.asarray(f_table, dtype=float)
        Q = np.asarray(Q_table, dtype=float)
        if f.ndim != 1 or f.shape != Q.shape or f.size < 4:
            raise ModelDefinitionError("custom: need matching 1-d tables with >= 4 points")
        if np.any(np.diff(f) <= 0):
            raise ModelDefinitionError("custom: f table must be strictly increasing")
        if f[0] != 0.0:
            f = np.concatenate([[0.0], f])
            Q = np.concatenate([[0.0], Q])
        interp = PchipInterpolator(f, Q)
        # (Q4) needs a monotone Q'; a concave-then-convex table breaks it
        fs = np.linspace(f[0], f[-1], 4 * f.size)
        qp = interp.derivative()(fs)
        if np.any(np.diff(qp) < -1e-12 * max(1.0, np.max(np.abs(qp)))):
            raise ModelDefinitionError(
                "custom: tabulated Q has non-monotone Q', violating the "
                "convexity assumption (Q4)")
        if C1 is None:
            hi = f[f >= F0]
            C1 = (float(np.min(interp(hi) / hi ** (1.0 + 1.0 / mu1)))
                  if hi.size else 1.0)
        if C2 is None:
            lo = f[(f > 0.0) & (f <= F0)]
            C2 = (float(np.max(interp(lo) / lo ** (1.0 + 1.0 / mu2)))
                  if lo.size else 1.0)
        return CasimirModel(
            kind="custom", F0=F0, mu1=mu1, mu2=mu2, mu3=mu3,
            C1=C1, C2=C2, C3=C3, C4=C4,
            f_table=f, Q_table=Q, _interp=interp,
        )

    # -- evaluation --------------------------------------------------------

    def _raw_coeffs(self):
        return float(self.a1), float(self.a2)

    def Q(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "polytrope":
            return self.c * np.power(f, 1.0 + 1.0 / self.mu)
        if self.kind == "double_power":
            a1, a2 = self._raw_coeffs()
            return (a1 * np.power(f, 1.0 + 1.0 / self.mu1)
                    + a2 * np.power(f, 1.0 + 1.0 / self.mu2))
        return self._interp(np.clip(f, 0.0, self.f_table[-1]))

    def Qp(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "polytrope":
            p = 1.0 + 1.0 / self.mu
            return self.c * p * np.power(f, p - 1.0)
        if self.kind == "double_power":
            a1, a2 = self._raw_coeffs()
            p1 = 1.0 + 1.0 / self.mu1
            p2 = 1.0 + 1.0 / self.mu2
            return a1 * p1 * np.power(f, p1 - 1.0) + a2 * p2 * np.power(f, p2 - 1.0)
        return self._interp.derivative()(np.clip(f, 0.0, self.f_table[-1]))

    def Qpp(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "polytrope":
            p = 1.0 + 1.0 / self.mu
            return self.c * p * (p - 1.0) * np.power(f, p - 2.0)
        if self.kind == "double_power":
            a1, a2 = self._raw_coeffs()
            p1 = 1.0 + 1.0 / self.mu1
            p2 = 1.0 + 1.0 / self.mu2
            return (a1 * p1 * (p1 - 1.0) * np.power(f, p1 - 2.0)
                    + a2 * p2 * (p2 - 1.0) * np.power(f, p2 - 2.0))
        return self._interp.derivative(2)(np.clip(f, 0.0, self.f_table[-1]))

    def inverse(self) -> "InverseQ":
        return InverseQ(self)


class InverseQ:
    """The inverse q of Q', extended by q = 0 on negative arguments.

    Polytropes invert in closed form; other kinds use a monotone bracketed
    root-find (bisection to tolerance, then a Newton polish).
    """

    REL_TOL = 1e-12

    def __init__(self, model: CasimirModel):
        self.model = model
        if model.kind == "polytrope":
            # q(eps) = (mu*eps / (c*(mu+1)))^mu
            self._kappa = (model.mu / (model.c * (model.mu + 1.0))) ** model.mu
        elif model.kind == "custom":
            # bracket table: Q' sampled on the tabulated f range
            f = model.f_table
            self._fmax = float(f[-1])
            self._eps_max = float(model.Qp(self._fmax))

    # -- q -----------------------------------------------------------------

    def __call__(self, eps):
        return self.q(eps)

    def q(self, eps):
        """Phase-space density q(eps); exactly 0 for eps <= 0."""
        e = np.asarray(eps, dtype=float)
        if not np.all(np.isfinite(e)):
            raise InputError("q: non-finite argument")
        scalar = np.ndim(eps) == 0
        e = np.atleast_1d(e).astype(float)
        out = np.zeros_like(e)
        pos = e > 0.0
        if np.any(pos):
            out[pos] = self._q_positive(e[pos])
        return float(out[0]) if scalar else out

    def _q_positive(self, eps):
        m = self.model
        if m.kind == "polytrope":
            return self._kappa * np.power(eps, m.mu)
        if m.kind == "double_power":
            return self._q_root_double(eps)
        return self._q_root_custom(eps)

    def _q_root_double(self, eps):
        m = self.model
        a1, a2 = m._raw_coeffs()
        p1 = 1.0 + 1.0 / m.mu1
        p2 = 1.0 + 1.0 / m.mu2
        # upper bracket: f solving each single term alone
        f_hi = np.minimum((eps / (a1 * p1)) ** m.mu1, (eps / (a2 * p2)) ** m.mu2)
        f = f_hi.copy()
        # Q' is convex increasing, Newton from above converges monotonically
        for _ in range(80):
            g = m.Qp(f) - eps
            df = g / m.Qpp(f)
            f_new = np.maximum(f - df, 0.5 * f)
            done = np.abs(f_new - f) <= self.REL_TOL * np.maximum(f_new, 1e-300)
            f = f_new
            if np.all(done):
                break
        return f

    def _q_root_custom(self, eps):
        m = self.model
        if np.any(eps > self._eps_max * (1.0 + 1e-12)):
            bad = float(np.max(eps))
            raise ConvergenceError(
                f"q: bracket exhausted for eps={bad:.6g} "
                f"(table covers Q' up to {self._eps_max:.6g})")
        lo = np.zeros_like(eps)
        hi = np.full_like(eps, self._fmax)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            above = m.Qp(mid) > eps
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        f = 0.5 * (lo + hi)
        # one Newton polish; robustness over speed since q sits in quadratures
        qpp = np.maximum(m.Qpp(f), 1e-300)
        f = np.clip(f - (m.Qp(f) - eps) / qpp, lo, hi)
        return f

    # -- antiderivatives ---------------------------------------------------

    def G(self, s):
        """G(s) = int_0^s q(t) dt; 0 for s <= 0."""
        sv = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(sv)):
            raise InputError("G: non-finite argument")
        scalar = np.ndim(s) == 0
        sv = np.atleast_1d(sv).astype(float)
        out = np.zeros_like(sv)
        pos = sv > 0.0
        if np.any(pos):
            sp = sv[pos]
            m = self.model
            if m.kind == "polytrope":
                out[pos] = self._kappa * np.power(sp, m.mu + 1.0) / (m.mu + 1.0)
            else:
                # t = s*u^2 flattens the t^mu endpoint behaviour
                u2 = _GL_U ** 2
                t = sp[:, None] * u2[None, :]
                qt = np.atleast_2d(self.q(t.ravel()).reshape(t.shape))
                out[pos] = 2.0 * sp * np.sum(_GL_W * _GL_U * qt, axis=1)
        return float(out[0]) if scalar else out

    def G2(self, s):
        """G2(s) = int_0^s G(u) du = int_0^s (s-t) q(t) dt."""
        sv = np.asarray(s, dtype=float)
        scalar = np.ndim(s) == 0
        sv = np.atleast_1d(sv).astype(float)
        out = np.zeros_like(sv)
        pos = sv > 0.0
        if np.any(pos):
            sp = sv[pos]
            m = self.model
            if m.kind == "polytrope":
                out[pos] = (self._kappa * np.power(sp, m.mu + 2.0)
                            / ((m.mu + 1.0) * (m.mu + 2.0)))
            else:
                u2 = _GL_U ** 2
                t = sp[:, None] * u2[None, :]
                gt = self.G(t.ravel()).reshape(t.shape)
                out[pos] = 2.0 * sp * np.sum(_GL_W * _GL_U * gt, axis=1)
        return float(out[0]) if scalar else out

    def GQ(self, s):
        """int_0^s Q(q(t)) dt, via the identity Q(q(t)) = t*q(t) - G(t)."""
        sv = np.atleast_1d(np.asarray(s, dtype=float))
        out = sv * self.G(sv) - 2.0 * self.G2(sv)
        return float(out[0]) if np.ndim(s) == 0 else out

    def GQ_scaled(self, s, amp):
        """int_0^s Q(amp * q(t)) dt by quadrature (used for rescaled states)."""
        sv = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(sv)
        pos = sv > 0.0
        if np.any(pos):
            sp = sv[pos]
            u2 = _GL_U ** 2
            t = sp[:, None] * u2[None, :]
            qt = self.q(t.ravel())
            integ = self.model.Q(amp * qt).reshape(t.shape)
            out[pos] = 2.0 * sp * np.sum(_GL_W * _GL_U * integ, axis=1)
        return float(out[0]) if np.ndim(s) == 0 else out


def q_eval(inv: InverseQ, eps):
    """Operation-style wrapper around InverseQ.q."""
    return inv.q(eps)


def q_antiderivative(inv: InverseQ, s):
    """Operation-style wrapper around InverseQ.G."""
    return inv.G(s)


@dataclass
class ValidationReport:
    """Per-assumption pass/fail with the worst margin found."""

    checks: dict
    all_passed: bool

    def failed(self):
        return [name for name, c in self.checks.items() if not c["passed"]]


def validate_assumptions(model: CasimirModel, f_grid) -> ValidationReport:
    """Numerically check (Q1)-(Q5) on a sample grid of phase-space densities.

    The grid must have at least 100 points and extend beyond F0.  Inequalities
    are checked with a small relative slack so that equality cases (the
    polytrope meets (Q1) with equality) pass.
    """
    f = np.asarray(f_grid, dtype=float)
    if f.size < 100:
        raise InputError("validate_assumptions: need >= 100 sample densities")
    if np.max(f) <= model.F0:
        raise InputError("validate_assumptions: grid must extend beyond F0")
    f = np.sort(f[f >= 0.0])
    checks = {}

    def _ineq(lhs, rhs):
        # lhs >= rhs with relative slack
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        margin = lhs - rhs + _REL_SLACK * (scale + 1e-300)
        return float(np.min(margin)), bool(np.all(margin >= 0.0))

    # (Q1) growth above F0
    f1 = f[f >= model.F0]
    m1, ok1 = _ineq(model.Q(f1), model.C1 * f1 ** (1.0 + 1.0 / model.mu1))
    checks["Q1"] = {"passed": ok1, "worst_margin": m1}

    # (Q2) bound below F0
    f2 = f[(f > 0.0) & (f <= model.F0)]
    m2, ok2 = _ineq(model.C2 * f2 ** (1.0 + 1.0 / model.mu2), model.Q(f2))
    checks["Q2"] = {"passed": ok2, "worst_margin": m2}

    # (Q3) scaling lower bound on a lambda grid in [0, 1]
    lam = np.linspace(0.0, 1.0, 41)
    fs = f[f > 0.0]
    if fs.size > 200:
        fs = fs[:: max(1, fs.size // 200)]
    Qf = model.Q(fs)
    lhs = model.Q(lam[:, None] * fs[None, :])
    rhs = (lam[:, None] ** (1.0 + 1.0 / model.mu3)) * Qf[None, :]
    m3, ok3 = _ineq(lhs, rhs)
    checks["Q3"] = {"passed": ok3, "worst_margin": m3}

    # (Q4) strict convexity and Q'(0) = 0
    qpp = model.Qpp(fs)
    qp0 = float(model.Qp(0.0))
    ok4 = bool(np.all(qpp > 0.0)) and abs(qp0) <= 1e-10 * max(1.0, float(model.Qp(np.max(fs))))
    checks["Q4"] = {"passed": ok4, "worst_margin": float(np.min(qpp)), "Qp0": qp0}

    # (Q5) Q'' comparability for lambda near 1 (declared neighborhood [0.5, 2])
    lam5 = np.geomspace(0.5, 2.0, 17)
    f5 = fs
    if model.kind == "custom":
        # keep lambda*f inside the tabulated range
        f5 = fs[lam5[-1] * fs <= model.f_table[-1]]
    qpp_f = model.Qpp(f5)
    qpp_l = model.Qpp(lam5[:, None] * f5[None, :])
    mlo, oklo = _ineq(qpp_l, model.C3 * qpp_f[None, :])
    mhi, okhi = _ineq(model.C4 * qpp_f[None, :], qpp_l)
    checks["Q5"] = {"passed": bool(oklo and okhi), "worst_margin": min(mlo, mhi)}

    return ValidationReport(checks=checks, all_passed=all(c["passed"] for c in checks.values()))
