"""Gear-train kinematics (Willis relations) and contact-imperfection frequencies.

All rates and frequencies are normalized by the rate of the output body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BodyNotInMesh, OverdeterminedInconsistent, UnderdeterminedTrain


@dataclass(frozen=True)
class Mesh:
    body_a: str
    teeth_a: int
    body_b: str
    teeth_b: int
    carrier: str
    internal: bool = False

    def __post_init__(self):
        for z in (self.teeth_a, self.teeth_b):
            if int(z) != z or z <= 0:
                raise ValueError("teeth counts must be positive integers")

    @property
    def label(self) -> str:
        return f"({self.body_a},{self.body_b})"

    def teeth(self, body: str) -> int:
        if body == self.body_a:
            return self.teeth_a
        if body == self.body_b:
            return self.teeth_b
        raise BodyNotInMesh(f"body {body!r} is not part of mesh {self.label}")


@dataclass(frozen=True)
class GearTrain:
    bodies: tuple[str, ...]
    meshes: tuple[Mesh, ...]
    fixed: tuple[str, ...]
    output: str

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(str(b) for b in self.bodies))
        object.__setattr__(self, "meshes", tuple(self.meshes))
        object.__setattr__(self, "fixed", tuple(str(b) for b in self.fixed))
        known = set(self.bodies)
        for m in self.meshes:
            if not {m.body_a, m.body_b, m.carrier} <= known:
                raise ValueError(f"mesh {m.label} references an unknown body")
        if self.output not in known or not set(self.fixed) <= known:
            raise ValueError("fixed/output bodies must be declared")


def solve_rates(g: GearTrain) -> dict[str, float]:
    """Body rates from the Willis relation of every mesh plus the fixed-body and
    output-normalization rows, solved as one linear system."""
    idx = {b: k for k, b in enumerate(g.bodies)}
    n = len(g.bodies)
    rows, rhs = [], []
    for m in g.meshes:
        # (Wa - Wc) za  -/+  (Wb - Wc) zb = 0   (internal / external mesh)
        sgn = -1.0 if m.internal else 1.0
        r = np.zeros(n)
        r[idx[m.body_a]] += m.teeth_a
        r[idx[m.body_b]] += sgn * m.teeth_b
        r[idx[m.carrier]] -= m.teeth_a + sgn * m.teeth_b
        rows.append(r)
        rhs.append(0.0)
    for b in g.fixed:
        r = np.zeros(n)
        r[idx[b]] = 1.0
        rows.append(r)
        rhs.append(0.0)
    r = np.zeros(n)
    r[idx[g.output]] = 1.0
    rows.append(r)
    rhs.append(1.0)
    M, y = np.array(rows), np.array(rhs)
    if np.linalg.matrix_rank(M) < n:
        raise UnderdeterminedTrain("kinematic constraints do not fix every body rate")
    x, *_ = np.linalg.lstsq(M, y, rcond=None)
    if np.linalg.norm(M @ x - y) > 1e-9 * max(1.0, np.abs(M).max()):
        raise OverdeterminedInconsistent("kinematic constraints are contradictory")
    return {b: float(x[idx[b]]) for b in g.bodies}


def mesh_frequency(g: GearTrain, mesh: Mesh, rates: dict | None = None) -> float:
    rates = solve_rates(g) if rates is None else rates
    wc = rates[mesh.carrier]
    fa = abs(rates[mesh.body_a] - wc) * mesh.teeth_a
    fb = abs(rates[mesh.body_b] - wc) * mesh.teeth_b
    if abs(fa - fb) > 1e-9 * max(1.0, fa):
        raise OverdeterminedInconsistent(f"mesh {mesh.label}: {fa} != {fb} from the two gears")
    return fa


def tooth_defect_frequency(g: GearTrain, mesh: Mesh, body: str, rates: dict | None = None) -> tuple[float, int]:
    """Frequency of a single damaged tooth on ``body`` and the number of such sources."""
    z = mesh.teeth(body)
    return mesh_frequency(g, mesh, rates) / z, z


@dataclass(frozen=True)
class Imperfection:
    number: int
    frequency: float       # normalized by the output rate
    mesh: str
    cause: str
    sources: int


def imperfection_catalog(g: GearTrain) -> list[Imperfection]:
    """Gear frequency plus one tooth defect per gear, for every mesh in order."""
    rates = solve_rates(g)
    out = []
    for m in g.meshes:
        out.append(Imperfection(len(out) + 1, mesh_frequency(g, m, rates), m.label, "gear frequency", 1))
        for body in (m.body_a, m.body_b):
            f, z = tooth_defect_frequency(g, m, body, rates)
            out.append(Imperfection(len(out) + 1, f, m.label, f"a tooth on body {body}", z))
    return out


def sadm_gear_train() -> GearTrain:
    """Epicyclic SADM reducer: input carrier 1, fixed ring 2, compound planet 3
    (69/75 teeth), output ring 4."""
    return GearTrain(
        bodies=("1", "2", "3", "4"),
        meshes=(Mesh("2", 74, "3", 69, carrier="1", internal=True),
                Mesh("3", 75, "4", 80, carrier="1", internal=True)),
        fixed=("2",),
        output="4",
    )
