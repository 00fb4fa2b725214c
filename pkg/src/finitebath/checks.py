"""A quick self-check of the library's core invariants.

Each check returns ``(name, passed, detail)``. The set is small enough to run
in a few seconds and is what ``finitebath verify`` executes.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .asymptotics import coeff_c1, coeff_c1_from_psi, coeff_d1
from .bath import BathSpec, SiteSpectrum, build_sorted_spectrum, gibbs_site_probs, moments
from .lift import classical_permutation, work_distribution
from .protocol import ProtocolConfig, apply_protocol_blockwise, apply_protocol_exact
from .segments import d_x_n, d_y_n
from .thermo import EngineConfig, eta_thermo, eta_thermo_via_relent

QUBIT = SiteSpectrum((1.0, -1.0))
B_HOT, B_COLD = 1 / 30, 1 / 15


def _brute_sorted(site, beta, n):
    p = gibbs_site_probs(site, beta)
    joint = np.array([1.0])
    for _ in range(n):
        joint = np.kron(joint, p)
    return np.sort(joint)[::-1]


def check_normalisation():
    spec = build_sorted_spectrum(BathSpec(QUBIT, B_HOT, 20))
    total = float(spec.cum_probs[-1])
    return "sorted spectrum sums to one", abs(total - 1) < 1e-14 and spec.cum_counts[-1] == 2**20, f"{total!r}"


def check_moments():
    m = moments(QUBIT, 0.7)
    ok = abs(m.variance - 1 / math.cosh(0.7) ** 2) < 1e-14 and abs(m.skewness - 2 * math.sinh(0.7)) < 1e-13
    return "two-level moments match closed form", ok, f"var={m.variance}, skew={m.skewness}"


def check_c1_paths():
    h, c = moments(QUBIT, B_HOT), moments(QUBIT, B_COLD)
    a, b = coeff_c1(h, c, B_HOT, B_COLD), coeff_c1_from_psi(h, c, B_HOT, B_COLD)
    return "c1 from variance equals c1 from psi", abs(a - b) <= 1e-13 * a, f"{a} vs {b}"


def check_d1_anchor():
    value = coeff_d1(moments(QUBIT, B_HOT), moments(QUBIT, B_COLD), B_HOT, B_COLD)
    return "d1 within 1% of 14343", abs(value - 14343) / 14343 < 0.01, f"{value}"


def check_carnot_limit():
    n = 1000
    sol = eta_thermo(EngineConfig.build(QUBIT, B_HOT, B_COLD, n, 1e-9 * n))
    return "optimal efficiency tends to Carnot", abs(sol.eta_thermo - 0.5) < 1e-6, f"{sol.eta_thermo}"


def check_relent_identity():
    cfg = EngineConfig.build(QUBIT, B_HOT, B_COLD, 10_000, 0.3 * 10_000 ** (2 / 3))
    a, b = eta_thermo(cfg).eta_thermo, eta_thermo_via_relent(cfg)
    return "energy and relative-entropy forms agree", abs(a - b) < 1e-10, f"diff={a - b:.3g}"


def check_divergence_oracle():
    n, beta = 8, 0.4
    spec = build_sorted_spectrum(BathSpec(QUBIT, beta, n))
    p = _brute_sorted(QUBIT, beta, n)
    size, worst = p.size, 0.0
    for m in (1, 2, 3):
        q = 2**m
        idx = np.arange(size)
        dx = np.sum(p * np.log(q * p / p[-(-idx // q)]))
        dy = np.sum(p * np.log(p / (q * p[np.minimum(idx * q, size - 1)])))
        worst = max(worst, abs(d_x_n(spec, m) - dx) / abs(dx), abs(d_y_n(spec, m) - dy) / abs(dy))
    return "block sums equal direct sums", worst < 1e-12, f"max rel err {worst:.2g}"


def check_exact_identity():
    cfg = ProtocolConfig(EngineConfig.build(QUBIT, B_HOT, B_COLD, 12, 1.0), m=2, mode="exact")
    out = apply_protocol_exact(cfg)
    ok = abs(out.identity_residual) < 1e-10 and out.eta < 1 - B_HOT / B_COLD
    return "efficiency identity in exact mode", ok, f"residual {out.identity_residual:.2g}"


def check_permutation():
    cfg = ProtocolConfig(EngineConfig.build(QUBIT, 0.4, 0.9, 5, 1.0), m=2)
    perm = classical_permutation(cfg)
    return "swap is a permutation of joint configurations", np.unique(perm).size == perm.size, f"{perm.size} states"


def check_work_mean():
    cfg = ProtocolConfig(EngineConfig.build(QUBIT, B_HOT, B_COLD, 12, 1.0), m=2, mode="exact")
    out = apply_protocol_exact(cfg)
    wd = work_distribution(cfg)
    return "mean storage energy equals work", abs(wd.mean - out.work) < 1e-10, f"{wd.mean} vs {out.work}"


def check_blockwise_order():
    n = 3000
    cfg = EngineConfig.build(QUBIT, B_HOT, B_COLD, n, 0.3 * n ** (2 / 3))
    out = apply_protocol_blockwise(ProtocolConfig(cfg))
    bound = eta_thermo(EngineConfig.build(QUBIT, B_HOT, B_COLD, n, out.heat_hot)).eta_thermo
    return "protocol efficiency below optimal efficiency", out.eta <= bound, f"{out.eta} <= {bound}"


ALL_CHECKS = (
    check_normalisation,
    check_moments,
    check_c1_paths,
    check_d1_anchor,
    check_carnot_limit,
    check_relent_identity,
    check_divergence_oracle,
    check_exact_identity,
    check_permutation,
    check_work_mean,
    check_blockwise_order,
)


def run_checks():
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for check in ALL_CHECKS:
            try:
                results.append(check())
            except Exception as exc:  # a crash is a failed check
                results.append((check.__name__, False, repr(exc)))
    return results
