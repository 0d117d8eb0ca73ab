"""Benchmark and test instance builders.

``random_instance`` draws small mixed-integer conic problems whose optimum can
be found by enumerating every integer assignment (``brute_force``). The
``ball_*`` builders encode lattice infeasibility of the Euclidean ball of
radius ``sqrt(n - 1) / 2`` centred at ``(1/2, ..., 1/2)``: every 0/1 point lies
at distance ``sqrt(n) / 2`` from the centre, so no binary vector fits, yet the
continuous relaxation is feasible.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .cones import ConeProduct, ConeSpec
from .conic_solver import Status, solve_conic
from .oa import ConicProblem


def brute_force(p: ConicProblem, tol: float = 1e-8):
    """Best objective over all integer assignments, each solved as a conic problem.

    Returns
    -------
    value : float
        ``inf`` when every assignment is infeasible.
    x : array or None
    values : dict
        Subproblem value (``inf`` if infeasible) per assignment tuple.
    """
    ranges = [range(int(lo), int(hi) + 1) for lo, hi in zip(p.L, p.U)]
    best, best_x = math.inf, None
    values = {}
    for xs in itertools.product(*ranges):
        cert = solve_conic(p.subproblem(np.array(xs, float)), tol=tol)
        if cert.status is Status.OPTIMAL:
            v = float(cert.value)
        elif cert.status is Status.INFEASIBLE:
            v = math.inf
        else:
            raise RuntimeError(f"enumeration solve failed at {xs}: {cert.status.value} {cert.message}")
        values[xs] = v
        if v < best:
            best, best_x = v, np.array(xs, float)
    return best, best_x, values


def random_instance(rng: np.random.Generator, n_int: Optional[int] = None,
                    max_assignments: int = 256, infeasible_rows: bool = True) -> ConicProblem:
    """Draw a bounded mixed-integer conic problem with mixed cone factors.

    Every factor is tied to the integers through affine equality rows: its
    "argument" coordinates equal an affine function of ``x`` plus, sometimes,
    a free continuous shift, and its epigraph coordinate carries a positive
    objective weight (POW blocks are hypographs with a negative weight).
    Optional orthant budget rows and a ball constraint cut off some
    assignments, with a margin so that infeasibility is never marginal.
    """
    if n_int is None:
        n_int = int(rng.integers(1, 9))
    while True:
        widths = rng.integers(0, 4, n_int)
        if np.prod(widths + 1) <= max_assignments:
            break
        n_int = max(1, n_int - 1)
    L = rng.integers(-1, 2, n_int).astype(float)
    U = L + widths
    mid = (L + U) / 2.0

    factors: list = []
    rows_x: list = []
    rows_z: list = []  # (column, coeff) lists
    rhs: list = []
    cost: list = []
    nz = 0

    def link(col, gx, const, extra=()):
        # z[col] + sum(coeff * z) - gx . x = const
        rows_x.append(-np.asarray(gx, float))
        rows_z.append([(col, 1.0)] + list(extra))
        rhs.append(const)

    def affine():
        g = rng.integers(-2, 3, n_int) * (rng.random(n_int) < 0.6)
        return g.astype(float), float(rng.integers(-2, 3)) * 0.5

    n_blocks = int(rng.integers(1, 5))
    kinds = rng.choice(["soc", "exp", "pow", "nonneg"], size=n_blocks, p=[0.35, 0.3, 0.25, 0.1])
    for kind in kinds:
        if kind == "soc":
            d = int(rng.integers(2, 5))
            factors.append(ConeSpec.soc(d))
            cost += [float(rng.uniform(0.5, 2.0))] + [0.0] * (d - 1)
            for k in range(1, d):
                g, c0 = affine()
                link(nz + k, g, c0)
            nz += d
        elif kind == "exp":
            factors.append(ConeSpec.exp())
            cost += [0.0, 0.0, float(rng.uniform(0.5, 2.0))]
            g, c0 = affine()
            link(nz, 0.3 * g, 0.3 * c0)
            # second coordinate stays positive over the box
            gy = 0.2 * rng.integers(0, 2, n_int)
            link(nz + 1, gy, float(rng.uniform(0.5, 1.5)) - gy @ L)
            nz += 3
        elif kind == "pow":
            a = float(rng.choice([0.25, 0.5, 0.75, rng.uniform(0.1, 0.9)]))
            factors.append(ConeSpec.pow(a))
            cost += [0.0, 0.0, -float(rng.uniform(0.5, 2.0))]
            for k in range(2):
                gp = 0.5 * rng.integers(0, 3, n_int)
                link(nz + k, gp, float(rng.uniform(0.5, 2.0)) - gp @ L)
            nz += 3
        else:
            d = int(rng.integers(1, 3))
            factors.append(ConeSpec.nonneg(d))
            cost += list(rng.uniform(0.0, 1.0, d))
            for k in range(d):
                g, c0 = affine()
                # slack of a budget row g.x <= c0 + offset, offset >= 0 with margin
                if infeasible_rows and rng.random() < 0.5:
                    vals = [g @ np.array(v) for v in itertools.product(*[(lo, hi) for lo, hi in zip(L, U)])]
                    off = float(np.median(vals)) + 0.5
                    link(nz + k, -g, off)
                else:
                    link(nz + k, -g, float(np.max(np.abs(g)) * (np.abs(L) + np.abs(U)).sum() + 1.0))
            nz += d
    if infeasible_rows and rng.random() < 0.3:
        # ball around the box centre; radius strictly between lattice distances
        pts = np.array(list(itertools.product(*[np.arange(lo, hi + 1) for lo, hi in zip(L, U)])))
        dist = np.sort(np.unique(np.round(np.linalg.norm(pts - mid, axis=1), 9)))
        gaps = [(dist[i], dist[i + 1]) for i in range(len(dist) - 1) if dist[i + 1] - dist[i] >= 0.1]
        if gaps:
            lo_d, hi_d = gaps[int(rng.integers(0, len(gaps)))]
            radius = (lo_d + hi_d) / 2.0
            factors.append(ConeSpec.soc(n_int + 1))
            cost += [0.0] * (n_int + 1)
            rows_x.append(np.zeros(n_int))
            rows_z.append([(nz, 1.0)])
            rhs.append(radius)
            for k in range(n_int):
                e = np.zeros(n_int)
                e[k] = 1.0
                link(nz + 1 + k, e, -mid[k])
            nz += n_int + 1
    m = len(rhs)
    A_x = np.vstack(rows_x) if m else np.zeros((0, n_int))
    A_z = sp.lil_matrix((m, nz))
    for i, entries in enumerate(rows_z):
        for col, val in entries:
            A_z[i, col] += val
    return ConicProblem(np.array(cost), A_x, A_z.tocsr(), np.array(rhs), L, U, ConeProduct(tuple(factors)))


def ball_unlifted(n: int) -> ConicProblem:
    """Ball constraint as one ``SOC_{n+1}`` block ``(r, x - 1/2)``."""
    r = math.sqrt(n - 1) / 2.0
    A_z = sp.identity(n + 1, format="csr")
    A_x = sp.vstack([sp.csr_matrix((1, n)), -sp.identity(n)]).tocsr()
    b = np.concatenate([[r], -0.5 * np.ones(n)])
    return ConicProblem(np.zeros(n + 1), A_x, A_z, b, np.zeros(n), np.ones(n),
                        ConeProduct((ConeSpec.soc(n + 1),)))


def ball_model(n: int) -> str:
    """Separable model text: ``sum_k square(x_k - 1/2) <= (n - 1) / 4``."""
    decl = "\n".join(f"(int x{k} 0 1)" for k in range(n))
    terms = " ".join(f"(square (- x{k} 0.5))" for k in range(n))
    return f"{decl}\n(minimize 0)\n(<= (+ {terms}) {repr((n - 1) / 4.0)})\n"
