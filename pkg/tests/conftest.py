"""Shared oracles for the test suite.

Everything here is computed without the library: dense numpy enumeration for
small baths, and closed forms of the two-level bath evaluated with mpmath.
"""

from __future__ import annotations

import mpmath
import numpy as np
import pytest

FIG_BETA_HOT = 1 / 30
FIG_BETA_COLD = 1 / 15
QUBIT_LEVELS = (1.0, -1.0)

# results collected by the acceptance tests, printed in the terminal summary
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def brute_sorted(levels, beta, n):
    """Dense descending product probabilities with matching total energies."""
    levels = np.asarray(levels, dtype=float)
    weights = np.exp(-beta * (levels - levels.min()))
    site = weights / weights.sum()
    probs, energy = np.array([1.0]), np.array([0.0])
    for _ in range(n):
        probs = np.kron(probs, site)
        energy = np.add.outer(energy, levels).ravel()
    order = np.argsort(-probs, kind="stable")
    return probs[order], energy[order]


def brute_d_x(p, m, d=2, rounding="ceil"):
    q = d**m
    idx = np.arange(p.size)
    target = -(-idx // q) if rounding == "ceil" else idx // q
    return float(np.sum(p * np.log(q * p / p[target])))


def brute_d_y(p, m, d=2):
    q = d**m
    idx = np.minimum(np.arange(p.size) * q, p.size - 1)
    return float(np.sum(p * np.log(p / (q * p[idx]))))


class QubitClosedForm:
    """Two-level bath with levels +-1, per site, in mpmath at 120 digits."""

    dps = 120

    @staticmethod
    def energy(beta):
        return -mpmath.tanh(beta)

    @staticmethod
    def entropy(beta):
        return mpmath.log(2 * mpmath.cosh(beta)) - beta * mpmath.tanh(beta)

    @classmethod
    def eta_thermo(cls, beta_hot, beta_cold, x):
        """Optimal efficiency as a function of the heat per particle ``x``."""
        with mpmath.workdps(cls.dps):
            bh, bl, x = mpmath.mpf(beta_hot), mpmath.mpf(beta_cold), mpmath.mpf(x)
            bph = mpmath.atanh(mpmath.tanh(bh) + x)
            moved = cls.entropy(bh) - cls.entropy(bph)
            target = cls.entropy(bl) + moved
            bpl = mpmath.findroot(lambda b: cls.entropy(b) - target, bl)
            released = mpmath.tanh(bl) - mpmath.tanh(bpl)
            return 1 - released / x

    @classmethod
    def expansion_coefficients(cls, beta_hot, beta_cold, order=3):
        """``c_k`` in ``eta = carnot - sum c_k x**k`` by Taylor expansion in x."""
        with mpmath.workdps(cls.dps):
            step = mpmath.mpf(10) ** (-cls.dps // 5)
            series = mpmath.taylor(lambda x: cls.eta_thermo_regular(beta_hot, beta_cold, x), 0, order, h=step)
            return [-c for c in series[1:]]

    @classmethod
    def eta_thermo_regular(cls, beta_hot, beta_cold, x):
        if x == 0:
            return 1 - mpmath.mpf(beta_hot) / mpmath.mpf(beta_cold)
        return cls.eta_thermo(beta_hot, beta_cold, x)

    @staticmethod
    def psi_derivatives(levels, beta):
        """``psi'`` and ``psi''`` at ``-S`` from numerical derivatives of ``phi``."""
        with mpmath.workdps(40):
            lw = [-mpmath.mpf(beta) * h for h in levels]
            log_z = mpmath.log(mpmath.fsum(mpmath.exp(v) for v in lw))
            log_p = [v - log_z for v in lw]

            def phi(s):
                return mpmath.log(mpmath.fsum(mpmath.exp(s * v) for v in log_p))

            d2 = mpmath.diff(phi, 1, 2)
            d3 = mpmath.diff(phi, 1, 3)
            return 1 / d2, -d3 / d2**3


@pytest.fixture(scope="session")
def qubit_closed_form():
    return QubitClosedForm


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
