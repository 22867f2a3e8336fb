"""Continuous/discrete LTI state-space algebra with named ports.

Every block in the package is a :class:`StateSpaceModel`.  Inputs and outputs
are grouped into named ports (``("W_P", 6)``, ``("i", 1)``, ...) so that block
diagrams with many 6-wide wrench/acceleration buses can be wired by name.

Port references used by :func:`connect` have the form ``"block.port"``,
optionally followed by a slice ``"block.port[3:6]"`` or an index
``"block.port[5]"``.  The block prefix may be dropped when the port name is
unique among the connected models.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    AlgebraicLoopSingular,
    ChannelMismatch,
    NonstrictlyProper,
    PortMismatch,
    SingularResolvent,
    UnstableModel,
)

Ports = tuple[tuple[str, int], ...]

DEFAULT_GRID = np.logspace(-3, 4, 400)
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _as_ports(spec, total: int, default: str) -> Ports:
    if spec is None:
        return ((default, total),) if total else ()
    if isinstance(spec, dict):
        spec = list(spec.items())
    out = []
    for item in spec:
        if isinstance(item, str):
            out.append((item, 1))
        else:
            name, width = item
            out.append((str(name), int(width)))
    return tuple(out)


def _offsets(ports: Ports) -> dict[str, slice]:
    res, k = {}, 0
    for name, w in ports:
        res[name] = slice(k, k + w)
        k += w
    return res


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Real (A, B, C, D) realization with named, sized input/output ports.

    ``dt`` is ``None`` for continuous-time models and the sample time for
    discrete-time ones.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    inputs: Ports = ()
    outputs: Ports = ()
    name: str = ""
    dt: float | None = None
    _in_idx: dict = field(init=False, repr=False, compare=False)
    _out_idx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        nx = A.shape[0]
        ny, nu = D.shape
        B = np.asarray(self.B, dtype=float).reshape(nx, nu)
        C = np.asarray(self.C, dtype=float).reshape(ny, nx)
        if A.shape != (nx, nx):
            raise PortMismatch(f"A must be square, got {A.shape}")
        inputs = _as_ports(self.inputs or None, nu, "u")
        outputs = _as_ports(self.outputs or None, ny, "y")
        if sum(w for _, w in inputs) != nu:
            raise PortMismatch(f"input port widths {inputs} do not sum to {nu}")
        if sum(w for _, w in outputs) != ny:
            raise PortMismatch(f"output port widths {outputs} do not sum to {ny}")
        for ports in (inputs, outputs):
            names = [n for n, _ in ports]
            if len(set(names)) != len(names):
                raise PortMismatch(f"duplicate port names in {names}")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "_in_idx", _offsets(inputs))
        object.__setattr__(self, "_out_idx", _offsets(outputs))

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.D.shape[1]

    @property
    def ny(self) -> int:
        return self.D.shape[0]

    def input_slice(self, port: str) -> slice:
        try:
            return self._in_idx[port]
        except KeyError:
            raise PortMismatch(f"{self.name or 'model'} has no input port {port!r}") from None

    def output_slice(self, port: str) -> slice:
        try:
            return self._out_idx[port]
        except KeyError:
            raise PortMismatch(f"{self.name or 'model'} has no output port {port!r}") from None

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.nx else np.zeros(0, dtype=complex)

    def is_stable(self) -> bool:
        p = self.poles()
        if self.dt is None:
            return bool(np.all(p.real < 0))
        return bool(np.all(np.abs(p) < 1))

    def with_name(self, name: str) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B, self.C, self.D, self.inputs, self.outputs, name, self.dt)

    def scaled(self, alpha: float) -> "StateSpaceModel":
        """Output-scaled copy ``alpha * m``."""
        return StateSpaceModel(self.A, self.B, alpha * self.C, alpha * self.D,
                               self.inputs, self.outputs, self.name, self.dt)

    def select(self, inputs: Sequence[str] | None = None,
               outputs: Sequence[str] | None = None) -> "StateSpaceModel":
        """Sub-model keeping only the given ports (in the given order)."""
        inputs = list(inputs) if inputs is not None else [n for n, _ in self.inputs]
        outputs = list(outputs) if outputs is not None else [n for n, _ in self.outputs]
        iu = np.concatenate([np.arange(self.nu)[self.input_slice(p)] for p in inputs]) if inputs else np.zeros(0, int)
        iy = np.concatenate([np.arange(self.ny)[self.output_slice(p)] for p in outputs]) if outputs else np.zeros(0, int)
        ip = tuple((p, self.input_slice(p).stop - self.input_slice(p).start) for p in inputs)
        op = tuple((p, self.output_slice(p).stop - self.output_slice(p).start) for p in outputs)
        return StateSpaceModel(self.A, self.B[:, iu], self.C[iy, :], self.D[np.ix_(iy, iu)],
                               ip, op, self.name, self.dt)

    def dc_gain(self) -> np.ndarray:
        if self.nx == 0:
            return self.D.copy()
        return self.D - self.C @ np.linalg.solve(self.A, self.B)

    def transfer(self, s: complex) -> np.ndarray:
        """Evaluate ``C (sI - A)^-1 B + D`` at a single complex point."""
        if self.nx == 0:
            return self.D.astype(complex)
        return self.D + self.C @ np.linalg.solve(s * np.eye(self.nx) - self.A, self.B)


def ss(A, B, C, D, inputs=None, outputs=None, name: str = "", dt=None) -> StateSpaceModel:
    A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.zeros((0, 0))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return StateSpaceModel(A, B, C, D, inputs or (), outputs or (), name, dt)


def static_gain(K, inputs=None, outputs=None, name: str = "") -> StateSpaceModel:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    ny, nu = K.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, nu)), np.zeros((ny, 0)), K,
                           inputs or (), outputs or (), name)


def append(*models: StateSpaceModel, name: str = "") -> StateSpaceModel:
    """Block-diagonal stacking; port names must not collide."""
    A = sla.block_diag(*[m.A for m in models]) if any(m.nx for m in models) else np.zeros((0, 0))
    B = sla.block_diag(*[m.B for m in models]) if models else np.zeros((0, 0))
    C = sla.block_diag(*[m.C for m in models])
    D = sla.block_diag(*[m.D for m in models])
    nx = sum(m.nx for m in models)
    nu = sum(m.nu for m in models)
    ny = sum(m.ny for m in models)
    return StateSpaceModel(np.reshape(A, (nx, nx)), np.reshape(B, (nx, nu)), np.reshape(C, (ny, nx)),
                           np.reshape(D, (ny, nu)),
                           sum((m.inputs for m in models), ()), sum((m.outputs for m in models), ()), name)


# ---------------------------------------------------------------- interconnection

_REF = re.compile(r"^(?:(?P<block>[^.\[\]]+)\.)?(?P<port>[^.\[\]]+)(?:\[(?P<a>-?\d*)(?P<colon>:)?(?P<b>-?\d*)\])?$")


class _Layout:
    def __init__(self, models: Sequence[StateSpaceModel]):
        self.models = list(models)
        names = [m.name for m in models if m.name]
        if len(set(names)) != len(names):
            raise PortMismatch(f"duplicate block names: {names}")
        self.u_off, self.y_off = [], []
        ku = ky = 0
        for m in models:
            self.u_off.append(ku)
            self.y_off.append(ky)
            ku += m.nu
            ky += m.ny
        self.nu, self.ny = ku, ky

    def _find(self, ref: str, kind: str) -> np.ndarray:
        mt = _REF.match(ref.strip())
        if not mt:
            raise PortMismatch(f"malformed port reference {ref!r}")
        block, port = mt["block"], mt["port"]
        hits = []
        for k, m in enumerate(self.models):
            if block is not None and m.name != block:
                continue
            idx = m._in_idx if kind == "in" else m._out_idx
            if port in idx:
                hits.append((k, idx[port]))
        if not hits:
            raise PortMismatch(f"no {kind}put port matches {ref!r}")
        if len(hits) > 1:
            raise PortMismatch(f"ambiguous port reference {ref!r}; qualify with the block name")
        k, sl = hits[0]
        base = (self.u_off if kind == "in" else self.y_off)[k]
        rng = np.arange(sl.start, sl.stop) + base
        if mt["a"] is not None or mt["colon"]:
            a = int(mt["a"]) if mt["a"] else None
            b = int(mt["b"]) if mt["b"] else None
            if mt["colon"]:
                rng = rng[a:b]
            else:
                if a is None or not -len(rng) <= a < len(rng):
                    raise PortMismatch(f"index out of range in {ref!r}")
                rng = rng[a:a + 1] if a >= 0 else rng[a:][:1]
        if rng.size == 0:
            raise PortMismatch(f"empty port selection {ref!r}")
        return rng

    def inp(self, ref):
        return self._find(ref, "in")

    def out(self, ref):
        return self._find(ref, "out")


def _gain(g, n_dst: int, n_src: int, what: str) -> np.ndarray:
    if g is None:
        g = 1.0
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        if n_dst != n_src:
            raise PortMismatch(f"width mismatch in {what}: {n_src} -> {n_dst}")
        return float(g) * np.eye(n_dst)
    if g.shape != (n_dst, n_src):
        raise PortMismatch(f"gain shape {g.shape} does not fit {what} ({n_dst}x{n_src})")
    return g


def _port_label(ref: str) -> str:
    mt = _REF.match(ref.strip())
    return mt["port"] if mt else ref


class Interconnection:
    """Wiring of a fixed set of block shapes, compiled once.

    Calling the object with blocks of the same port layout (matrices may
    differ) returns the interconnected model; this is what parameter sweeps
    use to avoid re-resolving port references.
    """

    def __init__(self, models: Sequence[StateSpaceModel], wiring: Iterable, external_inputs: Iterable,
                 external_outputs: Iterable, name: str = ""):
        lay = _Layout(models)
        self.name = name
        self.nu, self.ny = lay.nu, lay.ny
        self.shapes = [(m.nx, m.nu, m.ny) for m in models]
        K = np.zeros((lay.nu, lay.ny))
        for item in wiring:
            src, dst, *rest = item
            iy, iu = lay.out(src), lay.inp(dst)
            K[np.ix_(iu, iy)] += _gain(rest[0] if rest else None, iu.size, iy.size, f"{src} -> {dst}")
        self.K = K

        cols, in_ports = [], []
        for item in external_inputs:
            if isinstance(item, str):
                label, refs = _port_label(item), [item]
            else:
                label, refs = item
                refs = [refs] if isinstance(refs, str) else list(refs)
            idx = [lay.inp(r) for r in refs]
            w = idx[0].size
            if any(i.size != w for i in idx):
                raise PortMismatch(f"fan-out widths differ for external input {label!r}")
            E = np.zeros((lay.nu, w))
            for i in idx:
                E[i, np.arange(w)] += 1.0
            cols.append(E)
            in_ports.append((label, w))
        self.E = np.hstack(cols) if cols else np.zeros((lay.nu, 0))
        self.in_ports = tuple(in_ports)

        rows, out_ports = [], []
        for item in external_outputs:
            if isinstance(item, str):
                label, ref = _port_label(item), item
            else:
                label, ref = item
            iy = lay.out(ref)
            S = np.zeros((iy.size, lay.ny))
            S[np.arange(iy.size), iy] = 1.0
            rows.append(S)
            out_ports.append((label, iy.size))
        self.S = np.vstack(rows) if rows else np.zeros((0, lay.ny))
        self.out_ports = tuple(out_ports)
        self._checked = False

    def __call__(self, models: Sequence[StateSpaceModel], check: bool | None = None) -> StateSpaceModel:
        if [(m.nx, m.nu, m.ny) for m in models] != self.shapes:
            raise PortMismatch("blocks do not match the compiled interconnection")
        nx = sum(m.nx for m in models)
        A = np.zeros((nx, nx))
        B = np.zeros((nx, self.nu))
        C = np.zeros((self.ny, nx))
        D = np.zeros((self.ny, self.nu))
        kx = ku = ky = 0
        for m in models:
            A[kx:kx + m.nx, kx:kx + m.nx] = m.A
            B[kx:kx + m.nx, ku:ku + m.nu] = m.B
            C[ky:ky + m.ny, kx:kx + m.nx] = m.C
            D[ky:ky + m.ny, ku:ku + m.nu] = m.D
            kx += m.nx
            ku += m.nu
            ky += m.ny
        K, E, S = self.K, self.E, self.S
        L = np.eye(self.nu) - K @ D
        if check or (check is None and not self._checked):
            if self.nu and np.linalg.cond(L) > 1e12:
                raise AlgebraicLoopSingular("I - K D is singular: ill-posed algebraic loop")
            self._checked = True
        if self.nu:
            try:
                M = np.linalg.solve(L, np.hstack([K @ C, E]))
            except np.linalg.LinAlgError as exc:
                raise AlgebraicLoopSingular("I - K D is singular: ill-posed algebraic loop") from exc
        else:
            M = np.zeros((0, nx + E.shape[1]))
        MKC, ME = M[:, :nx], M[:, nx:]
        Acl = A + B @ MKC
        Bcl = B @ ME
        Ccl = S @ (C + D @ MKC)
        Dcl = S @ D @ ME
        return StateSpaceModel(Acl, Bcl, Ccl, Dcl, self.in_ports, self.out_ports, self.name)


def connect(models: Sequence[StateSpaceModel], wiring: Iterable, external_inputs: Iterable,
            external_outputs: Iterable, name: str = "") -> StateSpaceModel:
    """Interconnect blocks by named ports.

    ``wiring`` items are ``(src_output, dst_input)`` or ``(src_output, dst_input, gain)``
    where ``gain`` is a scalar or a ``(w_dst, w_src)`` matrix.  Several wires into
    the same input are summed.  ``external_inputs`` items are a reference (the new
    port takes the referenced port name) or ``(new_name, ref_or_list_of_refs)``;
    a list fans the new input out to every referenced input.  ``external_outputs``
    items are a reference or ``(new_name, ref)``.  Unwired internal inputs are zero.
    """
    return Interconnection(models, wiring, external_inputs, external_outputs, name)(models, check=True)


def feedback(plant: StateSpaceModel, controller: StateSpaceModel, sign: float = -1.0) -> StateSpaceModel:
    """Close ``u = sign * K y`` around a plant whose single port counts match."""
    p = plant.with_name("_plant")
    k = controller.with_name("_ctrl")
    (pin, _), (pout, _) = p.inputs[0], p.outputs[0]
    (kin, _), (kout, _) = k.inputs[0], k.outputs[0]
    return connect([p, k], [(f"_plant.{pout}", f"_ctrl.{kin}"), (f"_ctrl.{kout}", f"_plant.{pin}", sign)],
                   [("u", f"_plant.{pin}")], [("y", f"_plant.{pout}")])


# ------------------------------------------------------------ frequency response

@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    omega: np.ndarray
    H: np.ndarray  # (n_omega, ny, nu)

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("omega grid must be positive and strictly increasing")

    def sigma_max(self) -> np.ndarray:
        return _sigma_max(self.H)


def _sigma_max(H: np.ndarray) -> np.ndarray:
    if H.shape[1] == 1 or H.shape[2] == 1:
        return np.sqrt(np.sum(np.abs(H) ** 2, axis=(1, 2)))
    return np.linalg.svd(H, compute_uv=False)[:, 0]


def _response(m: StateSpaceModel, omega: np.ndarray) -> np.ndarray:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    nw = omega.size
    if m.nx == 0:
        return np.broadcast_to(m.D.astype(complex), (nw, m.ny, m.nu)).copy()
    s = 1j * omega
    lam, V = np.linalg.eig(m.A)
    if np.linalg.cond(V) < 1e8:
        CV = m.C @ V
        WB = np.linalg.solve(V, m.B)
        den = s[:, None] - lam[None, :]
        tiny = np.abs(den) < 1e-300
        if np.any(tiny):
            raise SingularResolvent("jw coincides with an eigenvalue of A")
        return m.D[None] + np.einsum("yk,wk,ku->wyu", CV, 1.0 / den, WB)
    I = np.eye(m.nx)
    H = np.empty((nw, m.ny, m.nu), dtype=complex)
    for k, sk in enumerate(s):
        try:
            H[k] = m.C @ np.linalg.solve(sk * I - m.A, m.B) + m.D
        except np.linalg.LinAlgError:
            try:
                H[k] = m.C @ np.linalg.solve((sk + 1e-12j) * I - m.A, m.B) + m.D
            except np.linalg.LinAlgError as exc:
                raise SingularResolvent(f"(jwI - A) singular at w={omega[k]}") from exc
    return H


def freq_response(m: StateSpaceModel, omega_grid=DEFAULT_GRID) -> FrequencyResponse:
    omega = np.asarray(omega_grid, dtype=float)
    return FrequencyResponse(omega, _response(m, omega))


def sigma_max_at(m: StateSpaceModel, omega) -> np.ndarray:
    return _sigma_max(_response(m, omega))


def _check_stable(m: StateSpaceModel):
    if m.nx and not m.is_stable():
        raise UnstableModel(f"model {m.name!r} has eigenvalues with nonnegative real part")


def peak_gain(fun, grid, refine_iters: int = 40, n_candidates: int = 3) -> tuple[float, float]:
    """Maximize a scalar gain function of frequency: grid search + golden refinement.

    ``fun`` maps an array of frequencies to gains.  Refinement runs on the
    log-frequency axis inside the bracket around each of the best local maxima.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    g = fun(grid)
    order = np.argsort(g)[::-1]
    peaks = []
    for k in order:
        if len(peaks) >= n_candidates:
            break
        left = g[k - 1] if k > 0 else -np.inf
        right = g[k + 1] if k + 1 < g.size else -np.inf
        if g[k] >= left and g[k] >= right:
            peaks.append(k)
    best_g, best_w = float(g[order[0]]), float(grid[order[0]])
    for k in peaks:
        lo = np.log(grid[max(k - 1, 0)])
        hi = np.log(grid[min(k + 1, grid.size - 1)])
        a, b = lo, hi
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = fun(np.exp([c]))[0], fun(np.exp([d]))[0]
        for _ in range(refine_iters):
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = fun(np.exp([c]))[0]
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = fun(np.exp([d]))[0]
        for gv, wv in ((fc, c), (fd, d)):
            if gv > best_g:
                best_g, best_w = float(gv), float(np.exp(wv))
    return best_g, best_w


def modal_grid(m: StateSpaceModel, grid=DEFAULT_GRID) -> np.ndarray:
    """Base grid augmented with the damped/natural frequencies of the poles."""
    extra = []
    if m.nx:
        p = m.poles()
        for w in np.concatenate([np.abs(p.imag), np.abs(p)]):
            if grid[0] <= w <= grid[-1]:
                extra.append(w)
    return np.unique(np.concatenate([np.asarray(grid, float), extra]))


def hinf_norm(m: StateSpaceModel, grid=DEFAULT_GRID, refine_iters: int = 40) -> tuple[float, float]:
    """Grid-and-refine lower bound of the H-infinity norm.

    Returns ``(gamma, omega_peak)``.  Exact to grid/refinement resolution.
    """
    _check_stable(m)
    if m.nx == 0:
        return float(np.linalg.norm(m.D, 2)) if m.D.size else 0.0, 0.0
    return peak_gain(lambda w: sigma_max_at(m, w), modal_grid(m, grid), refine_iters)


# ------------------------------------------------------------------ Gramians, H2

def lyap_kron(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` by Kronecker vectorization."""
    n = A.shape[0]
    I = np.eye(n)
    L = np.kron(I, A) + np.kron(A, I)
    x = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    X = x.reshape((n, n), order="F")
    return 0.5 * (X + X.T)


def solve_lyapunov(A: np.ndarray, Q: np.ndarray, kron_max: int = 40) -> np.ndarray:
    """``A X + X A^T + Q = 0``; Kronecker solve at desk scale, Bartels-Stewart above."""
    if A.shape[0] <= kron_max:
        return lyap_kron(A, Q)
    X = sla.solve_continuous_lyapunov(A, -Q)
    return 0.5 * (X + X.T)


def h2_norm(m: StateSpaceModel) -> float:
    _check_stable(m)
    if np.any(m.D != 0):
        raise NonstrictlyProper("H2 norm is infinite for a model with nonzero D")
    if m.nx == 0:
        return 0.0
    P = solve_lyapunov(m.A, m.B @ m.B.T)
    return float(np.sqrt(max(np.trace(m.C @ P @ m.C.T), 0.0)))


# ----------------------------------------------------------- discretization, sim

def discretize_zoh(m: StateSpaceModel, dt: float) -> StateSpaceModel:
    if not dt > 0:
        raise ValueError("dt must be positive")
    nx, nu = m.nx, m.nu
    M = np.zeros((nx + nu, nx + nu))
    M[:nx, :nx] = m.A
    M[:nx, nx:] = m.B
    E = sla.expm(M * dt)
    return StateSpaceModel(E[:nx, :nx], E[:nx, nx:], m.C, m.D, m.inputs, m.outputs, m.name, float(dt))


@dataclass(frozen=True, eq=False)
class TimeSeries:
    t0: float
    dt: float
    channels: tuple[str, ...]
    samples: np.ndarray  # (n_time, n_channels)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.shape[1] != len(self.channels):
            raise ChannelMismatch(f"{s.shape[1]} sample columns for {len(self.channels)} channels")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])

    def __len__(self):
        return self.samples.shape[0]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.samples[:, self.channels.index(name)]
        except ValueError:
            raise ChannelMismatch(f"no channel {name!r}") from None


def expand_channels(ports: Ports) -> tuple[str, ...]:
    out = []
    for name, w in ports:
        out.extend([name] if w == 1 else [f"{name}[{k}]" for k in range(w)])
    return tuple(out)


def propagate(Ad: np.ndarray, Bd: np.ndarray, U: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """State recursion ``x[k+1] = Ad x[k] + Bd u[k]``; returns (X[0..n-1], x[n])."""
    n = U.shape[0]
    X = np.empty((n, Ad.shape[0]))
    BU = U @ Bd.T
    x = np.array(x0, dtype=float)
    AdT = Ad.T
    for k in range(n):
        X[k] = x
        x = x @ AdT + BU[k]
    return X, x


def simulate(md: StateSpaceModel, u: TimeSeries, x0=None, return_state: bool = False):
    """Simulate a discrete model; outputs are sampled at the input instants."""
    if md.dt is None:
        raise ValueError("simulate expects a discretized model")
    if abs(u.dt - md.dt) > 1e-9 * md.dt:
        raise ChannelMismatch(f"input dt {u.dt} differs from model dt {md.dt}")
    if u.samples.shape[1] != md.nu:
        raise ChannelMismatch(f"{u.samples.shape[1]} input channels for a model with {md.nu} inputs")
    x0 = np.zeros(md.nx) if x0 is None else np.asarray(x0, dtype=float)
    X, xf = propagate(md.A, md.B, u.samples, x0)
    Y = X @ md.C.T + u.samples @ md.D.T
    ts = TimeSeries(u.t0, u.dt, expand_channels(md.outputs), Y)
    return (ts, xf) if return_state else ts
