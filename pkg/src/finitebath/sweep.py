"""Grid evaluation of the engine: one flat record per (n, q) point."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .asymptotics import eta_protocol_expansion, eta_thermo_expansion, expansion_coeffs, lattice_classify
from .bath import BathSpec, SiteSpectrum, moments
from .errors import InfeasibleError, ValidationError
from .lift import lift_report, work_distribution
from .protocol import ProtocolConfig, apply_protocol
from .thermo import EngineConfig, eta_thermo

CSV_COLUMNS = (
    "n,d,beta_hot,beta_cold,q_target,m,q_hot,work,eta_protocol,eta_thermo,eta_carnot,eta_exp1,eta_exp2,"
    "d_x,d_y,kl_total,l1_residual,ds_hot,ds_cold,s_storage,a_hot,a_cold,a_storage,mode,precision"
).split(",")

FIG_BETA_HOT = 1 / 30
FIG_BETA_COLD = 1 / 15
FIG_Q_RULE = (0.3, 2 / 3)


@dataclass(frozen=True)
class SweepSpec:
    levels: tuple
    beta_hot: float
    beta_cold: float
    ns: tuple
    q_values: tuple | None = None
    q_rule: tuple | None = None
    m: int | None = None
    mode: str = "auto"
    precision: str = "auto"
    with_storage: bool = True

    def points(self):
        for n in self.ns:
            if self.q_rule is not None:
                a, b = self.q_rule
                yield n, a * n**b
            else:
                for q in self.q_values:
                    yield n, q


def geometric_grid(start: float, stop: float, count: int) -> tuple:
    """``count`` integers spaced geometrically from ``start`` to ``stop``."""
    if count < 1 or start < 1 or stop < start:
        raise ValidationError("geometric grid needs 1 <= start <= stop and count >= 1")
    if count == 1:
        return (int(round(start)),)
    exps = np.linspace(math.log10(start), math.log10(stop), count)
    return tuple(dict.fromkeys(int(round(10**e)) for e in exps))


def preset(name: str) -> SweepSpec:
    if name == "fig1":
        return SweepSpec((1.0, -1.0), FIG_BETA_HOT, FIG_BETA_COLD, geometric_grid(1e2, 1e5, 25), q_rule=FIG_Q_RULE)
    if name == "fig2":
        return SweepSpec((1.0, -1.0), FIG_BETA_HOT, FIG_BETA_COLD, geometric_grid(1e3, 1e5, 13), q_rule=FIG_Q_RULE)
    raise ValidationError(f"unknown preset {name!r}; expected fig1 or fig2")


def _optimal(engine, q):
    try:
        return eta_thermo(replace(engine, q_target=q)).eta_thermo
    except InfeasibleError:
        return None


def evaluate_point(levels, beta_hot, beta_cold, n, q, m=None, mode="auto", precision="auto", with_storage=True) -> dict:
    """All sweep columns for one grid point.

    ``eta_thermo`` and the thermodynamic expansions are taken at the target
    heat. Comparisons with the protocol use the optimal efficiency at the
    heat the protocol actually draws (``eta_thermo_at_q_hot``), so that they
    are not dominated by the integer rounding of the block size.
    """
    site = SiteSpectrum(levels)
    engine = EngineConfig(BathSpec(site, beta_hot, n), BathSpec(site, beta_cold, n), q)
    config = ProtocolConfig(engine, m=m, mode=mode, precision=precision)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = apply_protocol(config)
        coeffs = expansion_coeffs(moments(site, beta_hot), moments(site, beta_cold), beta_hot, beta_cold)
        lattice = lattice_classify(site)
        q_hot = out.heat_hot
        eta_t = _optimal(engine, q)
        exp1 = eta_thermo_expansion(coeffs, beta_hot, beta_cold, q, n, 1)
        exp2 = eta_thermo_expansion(coeffs, beta_hot, beta_cold, q, n, 2)
        eta_t_hot = exp_protocol = None
        if q_hot > 0:
            eta_t_hot = _optimal(engine, q_hot)
            exp_protocol = eta_protocol_expansion(coeffs, beta_hot, beta_cold, q_hot, n, lattice)
        s_storage = a_hot = a_cold = a_storage = None
        if with_storage and out.eta is not None:
            wd = work_distribution(config)
            rep = lift_report(out, wd, config)
            s_storage, a_hot, a_cold, a_storage = rep.s_storage, rep.a_hot, rep.a_cold, rep.a_storage
    return {
        "n": n,
        "d": site.d,
        "beta_hot": beta_hot,
        "beta_cold": beta_cold,
        "q_target": q,
        "m": out.m,
        "q_hot": out.heat_hot,
        "work": out.work,
        "eta_protocol": out.eta,
        "eta_thermo": eta_t,
        "eta_carnot": out.eta_carnot,
        "eta_exp1": exp1,
        "eta_exp2": exp2,
        "d_x": out.d_x,
        "d_y": out.d_y,
        "kl_total": out.kl_total,
        "l1_residual": out.l1_residual,
        "ds_hot": out.delta_s_hot,
        "ds_cold": out.delta_s_cold,
        "s_storage": s_storage,
        "a_hot": a_hot,
        "a_cold": a_cold,
        "a_storage": a_storage,
        "mode": out.mode_used,
        "precision": out.precision_used,
        # extra fields, JSON only
        "eta_thermo_at_q_hot": eta_t_hot,
        "eta_protocol_expansion": exp_protocol,
        "d1": coeffs.d1,
        "l1_bound": out.l1_bound,
        "kl_residual_bound": out.kl_residual_bound,
        "block_condition_ok": out.block_condition_ok,
    }


def _evaluate(args):
    return evaluate_point(*args)


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("FBE_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ValidationError(f"FBE_THREADS must be an integer, got {env!r}") from None
    threads = threads or 1
    if threads < 1:
        raise ValidationError("thread count must be at least 1")
    return threads


def run_sweep(spec: SweepSpec, threads: int | None = None) -> list[dict]:
    """Evaluate every grid point; records come back ordered by n then q."""
    jobs = [
        (spec.levels, spec.beta_hot, spec.beta_cold, n, q, spec.m, spec.mode, spec.precision, spec.with_storage)
        for n, q in sorted(spec.points())
    ]
    workers = resolve_threads(threads)
    if workers == 1 or len(jobs) == 1:
        return [_evaluate(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate, jobs))


def add_scaling_columns(records: list[dict]) -> float | None:
    """Attach the cubic-correction constant of each point and return its fit.

    ``(eta_T - eta_protocol - d1 q/n**2) * n**3 / q**3`` per point, with
    ``q`` the heat drawn and ``eta_T`` the optimum at that heat; the fit is a
    least-squares slope of the residual against ``(q/n)**3`` over the upper
    decade of n.
    """
    usable = []
    for rec in records:
        rec["gap"] = rec["d1_term"] = rec["cubic_constant"] = None
        if rec["eta_thermo_at_q_hot"] is None or rec["eta_protocol"] is None:
            continue
        n, q = rec["n"], rec["q_hot"]
        gap = rec["eta_thermo_at_q_hot"] - rec["eta_protocol"]
        d1_term = rec["d1"] * q / n**2
        x = (q / n) ** 3
        rec["gap"], rec["d1_term"], rec["cubic_constant"] = gap, d1_term, (gap - d1_term) / x
        usable.append((n, x, gap - d1_term))
    if not usable:
        return None
    top = max(n for n, _, _ in usable)
    upper = [(x, r) for n, x, r in usable if n >= top / 10]
    return sum(x * r for x, r in upper) / sum(x * x for x, _ in upper)
