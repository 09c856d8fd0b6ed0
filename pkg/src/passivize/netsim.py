"""Diffusively coupled networks of switched SISO agents.

Agents sit on graph vertices, first-order lag controllers on edges.  The loop
is closed by ``zeta = E^T y~`` and ``u~ = -E mu``; each agent may run a local
I/O transformation ``[u~; y~] = T [u; y]``.
"""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .cones import _checked_transformation
from .lti import (
    RationalTransferFunction,
    StateSpaceModel,
    find_storage_realization,
    realize,
    ss_to_tf,
    transform_tf,
)

__all__ = [
    "NetworkGraph",
    "SwitchedAgentBank",
    "SimConfig",
    "SimTrace",
    "build_cycle_graph",
    "sample_mode_schedule",
    "closed_loop_matrix",
    "closed_loop_rhs",
    "rk4_step",
    "rk4_propagator",
    "simulate",
    "transformed_mode_check",
    "case_study_bank",
    "case_study_config",
    "CASE_STUDY_MODES",
    "CASE_STUDY_T",
    "write_trace_csv",
    "read_trace_csv",
    "plot_script",
    "config_from_dict",
]

SINGULAR_LOOP_TOL = 1e-9

# nominal mode and three faults: (num, den, (rho, nu))
CASE_STUDY_MODES = [
    ([2.0, 3.0], [1.0, 3.0, 2.0], (0.0, 0.0)),
    ([2.0, 3.0], list(np.polymul([1.0, 2.0], [1.0, -2.0 / 3.0])), (-2.0 / 3.0, 0.0)),
    ([2.0, -2.5], [1.0, 3.0, 2.0], (0.0, -1.25)),
    ([2.0, -0.1], list(np.polymul([1.0, -0.5], [1.0, -0.4])), (-0.4, -0.4)),
]
CASE_STUDY_T = np.array([[0.6918, 0.4622], [0.4883, 0.3896]])
CASE_STUDY_PROBS = (0.75, 0.083, 0.083, 0.083)


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Directed edge list over vertices ``0..n_vertices-1``."""

    n_vertices: int
    edges: tuple

    def __post_init__(self):
        n = int(self.n_vertices)
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range")
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self):
        return len(self.edges)

    def incidence(self):
        """``E[i, e] = -1`` at the tail, ``+1`` at the head."""
        e = np.zeros((self.n_vertices, self.n_edges))
        for k, (i, j) in enumerate(self.edges):
            e[i, k] = -1.0
            e[j, k] = 1.0
        return e


def build_cycle_graph(n):
    if n < 3:
        raise ValueError("a cycle graph needs n >= 3")
    return NetworkGraph(n, tuple((i, (i + 1) % n) for i in range(n)))


@dataclass(frozen=True, eq=False)
class SwitchedAgentBank:
    """Agent modes (index 0 nominal), switching period and mode probabilities."""

    modes: tuple
    switch_period: float = 5.0
    mode_probs: tuple = (1.0,)

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("bank needs at least one mode")
        orders = {m.order for m in modes}
        if len(orders) != 1:
            raise ValueError(f"all modes must share one state dimension, got {sorted(orders)}")
        p = np.asarray(self.mode_probs, dtype=float)
        if p.shape != (len(modes),):
            raise ValueError("one probability per mode is required")
        if np.any(p < 0) or p.sum() <= 0:
            raise ValueError("mode probabilities must be non-negative with positive sum")
        if self.switch_period <= 0:
            raise ValueError("switch period must be positive")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "mode_probs", tuple(p / p.sum()))

    @property
    def order(self):
        return self.modes[0].order


@dataclass(frozen=True, eq=False)
class SimConfig:
    graph: NetworkGraph
    agents: SwitchedAgentBank
    controller_tau: float = 100.0
    transformation: np.ndarray | None = None
    t_end: float = 150.0
    step: float = 1e-3
    seed: int = 0
    initial_states: np.ndarray | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.t_end < self.step:
            raise ValueError("t_end must be at least one step")
        if self.controller_tau <= 0:
            raise ValueError("controller time constant must be positive")
        ratio = self.agents.switch_period / self.step
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("switch period must be a multiple of the step")
        if self.transformation is not None:
            t = _checked_transformation(self.transformation)
            if t.shape != (2, 2):
                raise ValueError("agent transformation must be 2x2")
            a, b = t[0]
            for k, m in enumerate(self.agents.modes):
                if abs(a + b * m.d) < SINGULAR_LOOP_TOL:
                    raise ValueError(f"algebraic loop a + b*D vanishes for mode {k}")
            object.__setattr__(self, "transformation", t)
        if self.initial_states is not None:
            x0 = np.asarray(self.initial_states, dtype=float)
            if x0.shape != (self.graph.n_vertices, self.agents.order):
                raise ValueError(
                    f"initial_states must have shape {(self.graph.n_vertices, self.agents.order)}")
            object.__setattr__(self, "initial_states", x0)
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class SimTrace:
    times: np.ndarray
    outputs: np.ndarray
    disagreement: np.ndarray
    mode_log: np.ndarray
    switch_times: np.ndarray
    initial_states: np.ndarray
    seed: int = 0
    inputs: np.ndarray | None = None  # transformed inputs u~ = -E mu
    meta: dict = field(default_factory=dict)

    def modes_at(self, k):
        """Mode of every agent at sample ``k``."""
        idx = np.searchsorted(self.switch_times, self.times[k], side="right") - 1
        return self.mode_log[:, idx]


def sample_mode_schedule(agents, t_end, seed, agent_index):
    """Mode per switching interval; the first interval is always nominal."""
    n_int = max(1, math.ceil(t_end / agents.switch_period - 1e-12))
    rng = np.random.default_rng([int(seed), int(agent_index)])
    sched = np.zeros(n_int, dtype=int)
    if n_int > 1:
        sched[1:] = rng.choice(len(agents.modes), size=n_int - 1, p=agents.mode_probs)
    return sched


def _agent_gains(mode, t):
    """Coefficients with ``u = ax x + bu u~``, ``y = cx x + du u~``,
    ``y~ = tx x + tu u~``."""
    (a, b), (c, d) = t
    den = a + b * mode.d
    ax = -b * mode.c / den
    bu = 1.0 / den
    cx = mode.c + mode.d * ax
    du = mode.d * bu
    tx = c * ax + d * cx
    tu = c * bu + d * du
    return ax, bu, cx, du, tx, tu


def closed_loop_matrix(config, modes):
    """``z' = M z`` and ``y = Y z`` for state ``z = [x_1..x_N, mu_1..mu_m]``."""
    g, bank = config.graph, config.agents
    t = np.eye(2) if config.transformation is None else config.transformation
    e = g.incidence()
    n, nv, ne = bank.order, g.n_vertices, g.n_edges
    dim = n * nv + ne
    m = np.zeros((dim, dim))
    y = np.zeros((nv, dim))
    ytil = np.zeros((nv, dim))
    for i in range(nv):
        mode = bank.modes[modes[i]]
        ax, bu, cx, du, tx, tu = _agent_gains(mode, t)
        rows = slice(i * n, (i + 1) * n)
        # u~_i = -(E mu)_i
        util = np.zeros(dim)
        util[n * nv:] = -e[i]
        u_row = np.zeros(dim)
        u_row[rows] = ax.ravel()
        u_row += bu * util
        m[rows, rows] += mode.a
        m[rows, :] += mode.b @ u_row[None, :]
        y[i, rows] = cx.ravel()
        y[i] += du * util
        ytil[i, rows] = tx.ravel()
        ytil[i] += tu * util
    tau = config.controller_tau
    m[n * nv:, :] = (e.T @ ytil) / tau
    m[n * nv:, n * nv:] -= np.eye(ne) / tau
    return m, y


def closed_loop_rhs(config, modes):
    """Right-hand side evaluated agent by agent (no matrix assembly)."""
    g, bank = config.graph, config.agents
    t = np.eye(2) if config.transformation is None else config.transformation
    (a, b), (c, d) = t
    e = g.incidence()
    n, nv = bank.order, g.n_vertices

    def rhs(z):
        x = z[: n * nv].reshape(nv, n)
        mu = z[n * nv:]
        util = -e @ mu
        dz = np.empty_like(z)
        ytil = np.empty(nv)
        for i in range(nv):
            md = bank.modes[modes[i]]
            cx = float(md.c[0] @ x[i])
            u = (util[i] - b * cx) / (a + b * md.d)
            yi = cx + md.d * u
            ytil[i] = c * u + d * yi
            dz[i * n:(i + 1) * n] = md.a @ x[i] + md.b.ravel() * u
        dz[n * nv:] = (e.T @ ytil - mu) / config.controller_tau
        return dz

    return rhs


def rk4_step(f, z, h):
    k1 = f(z)
    k2 = f(z + 0.5 * h * k1)
    k3 = f(z + 0.5 * h * k2)
    k4 = f(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagator(m, h):
    """One classical RK4 step of ``z' = M z`` as a matrix."""
    hm = h * m
    eye = np.eye(m.shape[0])
    hm2 = hm @ hm
    return eye + hm + hm2 / 2.0 + hm2 @ hm / 6.0 + hm2 @ hm2 / 24.0


def _initial_state(config):
    nv, n, ne = config.graph.n_vertices, config.agents.order, config.graph.n_edges
    if config.initial_states is not None:
        x0 = config.initial_states
    else:
        rng = np.random.default_rng([int(config.seed), 2**31 - 1])
        x0 = rng.uniform(-1.0, 1.0, size=(nv, n))
    return np.concatenate([x0.ravel(), np.zeros(ne)]), x0


def simulate(config):
    """Fixed-step RK4 integration of the switched closed loop.

    Between switches the loop is linear and time invariant, so each RK4 step
    is applied as its exact one-step matrix; the state is carried unchanged
    across mode switches.
    """
    bank = config.agents
    nv = config.graph.n_vertices
    h = config.step
    n_steps = int(round(config.t_end / h))
    per_interval = int(round(bank.switch_period / h))
    sched = np.array([sample_mode_schedule(bank, config.t_end, config.seed, i)
                      for i in range(nv)])
    z, x0 = _initial_state(config)

    every = int(config.record_every)
    rec_idx = np.arange(0, n_steps + 1, every)
    if rec_idx[-1] != n_steps:
        rec_idx = np.append(rec_idx, n_steps)
    outputs = np.empty((nv, len(rec_idx)))
    inputs = np.empty((nv, len(rec_idx)))
    n_agent = nv * bank.order
    u_map = -config.graph.incidence()
    cache = {}
    r = 0
    k = 0
    while k <= n_steps:
        interval = min(k // per_interval, sched.shape[1] - 1)
        modes = tuple(sched[:, interval])
        if modes not in cache:
            m, y = closed_loop_matrix(config, modes)
            cache[modes] = (rk4_propagator(m, h), y)
        prop, y = cache[modes]
        end = min((interval + 1) * per_interval, n_steps + 1)
        if interval == sched.shape[1] - 1:
            end = n_steps + 1
        while k < end:
            if r < len(rec_idx) and rec_idx[r] == k:
                outputs[:, r] = y @ z
                inputs[:, r] = u_map @ z[n_agent:]
                r += 1
            if k == n_steps:
                k += 1
                break
            z = prop @ z
            k += 1
        if len(cache) > 256:
            cache.clear()

    times = rec_idx * h
    mean = outputs.mean(axis=0)
    disagreement = np.max(np.abs(outputs - mean), axis=0)
    switch_times = np.arange(sched.shape[1]) * bank.switch_period
    return SimTrace(times, outputs, disagreement, sched, switch_times, x0, int(config.seed),
                    inputs, {"step": h, "controller_tau": config.controller_tau,
                     "transformation": None if config.transformation is None
                     else config.transformation.tolist()})


def transformed_mode_check(bank, t):
    """Transfer function of every mode after the transformation ``t``."""
    modes = bank.modes if isinstance(bank, SwitchedAgentBank) else bank
    out = []
    for k, m in enumerate(modes):
        g = ss_to_tf(m) if isinstance(m, StateSpaceModel) else m
        try:
            out.append(transform_tf(g, t))
        except ValueError as exc:
            raise ValueError(f"transformation is singular for mode {k}: {exc}") from exc
    return out


def case_study_bank(realization="storage", probs=CASE_STUDY_PROBS, switch_period=5.0):
    """The nominal and three fault modes as a switched bank.

    ``realization="storage"`` realises each mode in coordinates where
    ``|x|^2 / 2`` certifies its passivity indices; ``"canonical"`` uses the
    controllable canonical form for every mode.
    """
    models = []
    for num, den, ind in CASE_STUDY_MODES:
        g = RationalTransferFunction(num, den)
        if realization == "canonical":
            models.append(realize(g))
        elif realization == "storage":
            found = find_storage_realization(g, ind)
            if not found.found:
                raise RuntimeError(f"no fixed-storage realisation: {found.report()}")
            models.append(found.model)
        else:
            raise ValueError(f"unknown realization {realization!r}")
    return SwitchedAgentBank(tuple(models), switch_period, tuple(probs))


def case_study_config(seed=0, transformation=CASE_STUDY_T, bank=None, **kw):
    """Ten agents on a cycle with ``tau = 100`` edge lags, 150 s horizon."""
    bank = case_study_bank() if bank is None else bank
    return SimConfig(build_cycle_graph(10), bank, controller_tau=100.0,
                     transformation=transformation, t_end=kw.pop("t_end", 150.0),
                     step=kw.pop("step", 1e-3), seed=seed, **kw)


def write_trace_csv(trace, path):
    nv = trace.outputs.shape[0]
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={trace.seed}\n")
        fh.write("# initial_states=" + ";".join(
            ",".join(f"{v:.17g}" for v in row) for row in trace.initial_states) + "\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y_{i + 1}" for i in range(nv)] + ["disagreement"]
                   + [f"mode_{i + 1}" for i in range(nv)])
        for k in range(len(trace.times)):
            modes = trace.modes_at(k)
            w.writerow([f"{trace.times[k]:.17g}"]
                       + [f"{v:.17g}" for v in trace.outputs[:, k]]
                       + [f"{trace.disagreement[k]:.17g}"]
                       + [str(int(v)) for v in modes])


def read_trace_csv(path):
    """Columns of a trace CSV as a dict of arrays (comment lines skipped)."""
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}


def plot_script(csv_path, n_agents, png_prefix="trace"):
    """Gnuplot script plotting agent outputs and log-scale disagreement."""
    lines = [
        "set datafile separator ','",
        "set key off",
        "set terminal pngcairo size 900,400",
        f"set output '{png_prefix}_outputs.png'",
        "set xlabel 't [s]'",
        "set ylabel 'y_i(t)'",
        "plot " + ", ".join(
            f"'{csv_path}' using 1:{i + 2} every ::1 with lines" for i in range(n_agents)),
        f"set output '{png_prefix}_disagreement.png'",
        "set logscale y",
        "set ylabel 'max_i |y_i - mean|'",
        f"plot '{csv_path}' using 1:{n_agents + 2} every ::1 with lines",
    ]
    return "\n".join(lines) + "\n"


def _mode_from_dict(item):
    if "a" in item:
        return StateSpaceModel.from_dict(item)
    g = RationalTransferFunction(item["num"], item["den"])
    if item.get("indices") is not None:
        found = find_storage_realization(g, item["indices"])
        if not found.found:
            raise ValueError(f"mode {item}: {found.report()}")
        return found.model
    return realize(g)


def config_from_dict(data):
    """Build a :class:`SimConfig` from its JSON form.

    Graph: ``{"cycle": n}`` or ``{"n_vertices": n, "edges": [[tail, head], ...]}``
    with 1-based vertices.  Modes: transfer functions (``num``/``den``, with
    optional ``indices`` to request a fixed-storage realisation) or
    ``a``/``b``/``c``/``d`` realisations.
    """
    gd = data["graph"]
    if "cycle" in gd:
        graph = build_cycle_graph(int(gd["cycle"]))
    else:
        graph = NetworkGraph(gd["n_vertices"], [(i - 1, j - 1) for i, j in gd["edges"]])
    ad = data["agents"]
    modes = tuple(_mode_from_dict(m) for m in ad["modes"])
    probs = ad.get("mode_probs", [1.0] + [0.0] * (len(modes) - 1))
    bank = SwitchedAgentBank(modes, float(ad.get("switch_period", 5.0)), tuple(probs))
    t = data.get("transformation")
    return SimConfig(
        graph, bank,
        controller_tau=float(data.get("controller_tau", 100.0)),
        transformation=None if t is None else np.asarray(t, dtype=float),
        t_end=float(data.get("t_end", 150.0)),
        step=float(data.get("step", 1e-3)),
        seed=int(data.get("seed", 0)),
        initial_states=data.get("initial_states"),
        record_every=int(data.get("record_every", 1)),
    )
