"""Gate-level statevector trajectory simulation of textbook QPE on a small
diagonal Ising chain, with per-moment local depolarizing noise.

Model and circuit
-----------------
H = h sum_i Z_i + t sum_i Z_i Z_{i+1} (open chain), U = e^{+iH}, so the
ground energy E0 lands inside the filtering window used downstream. The
initial product state carries per-qubit amplitude cos(theta/2) on the
ground-aligned (spin-down) basis state.

The circuit is: an H layer on the n control qubits and an Ry(theta) layer on
the system, then for k = 0..n-1 the controlled evolution c_k-U^(2^k) as
angle-scaled (fast-forwarded) controlled-phase moments, one gate per moment,
and finally a gate-per-moment inverse QFT (H / controlled-phase gates, swap
layer last). A uniformly random reference phase is folded into the
controlled-evolution angles each shot and subtracted from the measured
bitstring, which turns the discrete readout grid into continuous samples.

Noise
-----
After every moment, each qubit independently suffers a uniformly chosen
X/Y/Z Pauli with probability p_err; p_err is calibrated so the no-error
probability (1-p_err)^(N_q N_d) hits a target circuit fidelity. Whether the
inverse-QFT moments are noisy is configurable (they are by default).

Measurement samples the exact marginal distribution of the control register
computed from the statevector, which has identical statistics to qubit-wise
collapse. Trajectories derive an independent generator from (seed, shot), so
sample streams do not depend on how shots are batched or parallelized.
"""

from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .angles import TWO_PI, wrap
from .spectral import FilterReport, PromiseInterval, SpectralDistribution

__all__ = [
    "IsingSpec",
    "NoiseConfig",
    "Gate",
    "QpeCircuit",
    "ising_spectrum",
    "build_qpe_circuit",
    "calibrate_perr",
    "run_trajectory",
    "noiseless_control_distribution",
    "filtered_sampler",
    "filtered_pec_sampler",
    "ShotRecord",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_PAULI_NAMES = ("X", "Y", "Z")
_PEC_RETRY_BUDGET = 10_000


@dataclass(frozen=True)
class IsingSpec:
    """Transverse-field-free Ising chain: H = field sum Z + coupling sum ZZ."""

    n_sites: int = 4
    field: float = 0.27
    coupling: float = -0.46
    prep_angle: float = 0.8

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("n_sites must be at least 2")


@dataclass(frozen=True)
class NoiseConfig:
    """Per-qubit per-moment depolarizing probability, uniform over X/Y/Z."""

    p_err: float
    noise_during_qft: bool = True

    def __post_init__(self):
        if not (0 <= self.p_err < 1):
            raise ValueError("p_err must lie in [0, 1)")


@dataclass(frozen=True)
class Gate:
    """One gate: name, global qubit ids, optional angle.

    Control qubits are ids 0..n_ctrl-1 (id j is register bit j, weight 2^j);
    system qubits follow. ref_weight marks the gate that absorbs the
    per-shot reference phase exp(i * ref_weight * phi_ref) on its control.
    """

    name: str
    qubits: tuple
    angle: float = 0.0
    ref_weight: int = 0


def ising_spectrum(spec: IsingSpec) -> SpectralDistribution:
    """Eigenphases and overlap weights of the prepared product state.

    Enumerates all spin configurations; phase(z) = wrap(E(z)) under
    U = e^{+iH}, weight(z) = prod_i cos^2(theta/2) on spin-down sites and
    sin^2(theta/2) on spin-up sites. Degenerate phases are merged.
    """
    ns = spec.n_sites
    if ns > 12:
        raise ValueError("spectrum enumeration is limited to n_sites <= 12")
    z = np.arange(1 << ns)[:, None]
    spins = 1 - 2 * ((z >> np.arange(ns)) & 1)  # +1 spin-up (bit 0), -1 spin-down
    energy = spec.field * spins.sum(axis=1)
    energy = energy + spec.coupling * (spins[:, :-1] * spins[:, 1:]).sum(axis=1)
    c2, s2 = np.cos(spec.prep_angle / 2) ** 2, np.sin(spec.prep_angle / 2) ** 2
    weights = np.where(spins < 0, c2, s2).prod(axis=1)
    keep = weights > 0  # aligned preparations zero out whole configurations
    return SpectralDistribution(wrap(energy[keep]), weights[keep])


def _inverse_qft_moments(n: int) -> list:
    """Gate-per-moment inverse QFT on the value register, swap layer last."""
    moments = []
    for i in range(n):
        b_i = n - 1 - i
        for j in range(i):
            b_j = n - 1 - j
            moments.append([Gate("cphase", (b_j, b_i), -TWO_PI / 2 ** (i - j + 1))])
        moments.append([Gate("h", (b_i,))])
    for j in range(n // 2):
        moments.append([Gate("swap", (j, n - 1 - j))])
    return moments


@dataclass
class QpeCircuit:
    """Moment-ordered QPE circuit for an Ising system."""

    spec: IsingSpec
    n_ctrl: int
    moments: list

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    @property
    def K(self) -> int:
        return 1 << self.n_ctrl

    @property
    def n_qubits(self) -> int:
        return self.n_ctrl + self.n_sites

    @property
    def n_moments(self) -> int:
        return len(self.moments)

    @property
    def n_moments_before_qft(self) -> int:
        return 2 + self.n_ctrl * (2 * self.n_sites - 1)

    def noisy_moment_count(self, noise: NoiseConfig) -> int:
        return self.n_moments if noise.noise_during_qft else self.n_moments_before_qft

    @cached_property
    def _plan(self) -> "_Plan":
        return _Plan(self)


def build_qpe_circuit(spec: IsingSpec, n_ctrl: int) -> QpeCircuit:
    """Textbook QPE circuit with fast-forwarded controlled evolution."""
    if not (1 <= n_ctrl <= 12):
        raise ValueError("n_ctrl must lie in 1..12")
    n, ns = n_ctrl, spec.n_sites
    moments = [
        [Gate("h", (j,)) for j in range(n)],
        [Gate("ry", (n + m,), spec.prep_angle) for m in range(ns)],
    ]
    for k in range(n):
        scale = float(1 << k)
        for m in range(ns):
            moments.append(
                [Gate("czphase", (k, n + m), scale * spec.field,
                      ref_weight=(1 << k) if m == 0 else 0)]
            )
        for m in range(ns - 1):
            moments.append(
                [Gate("czzphase", (k, n + m, n + m + 1), scale * spec.coupling)]
            )
    moments += _inverse_qft_moments(n)
    return QpeCircuit(spec=spec, n_ctrl=n, moments=moments)


def calibrate_perr(n_qubits: int, n_moments: int, target_fidelity: float) -> float:
    """p_err with (1 - p_err)^(n_qubits * n_moments) = target_fidelity."""
    if not (0 < target_fidelity <= 1):
        raise ValueError("target fidelity must lie in (0, 1]")
    return 1.0 - target_fidelity ** (1.0 / (n_qubits * n_moments))


class _Plan:
    """Precomputed execution plan for one circuit.

    Diagonal (controlled-evolution) moments are stored as cumulative phase
    products so any error-free stretch collapses to one multiply; the
    reference phase enters as exp(i phi_ref (k & mask)) over the covered
    blocks. Inverse-QFT moments run gate-by-gate only on trajectories with
    an error inside the block; otherwise the whole block is one DFT.

    The flat statevector index is k * S + s (k = register value, s = system
    bits), so system qubit m is flat bit m and control qubit j is flat bit
    n_sites + j; single-qubit operations are reshape-and-slice, never
    fancy indexing.
    """

    def __init__(self, circ: QpeCircuit):
        n, ns = circ.n_ctrl, circ.n_sites
        self.n, self.ns = n, ns
        self.K, self.S = 1 << n, 1 << ns
        self.dim = self.K * self.S
        self.n_moments = circ.n_moments
        self.diag_start = 2
        self.qft_start = circ.n_moments_before_qft
        self.nd = self.qft_start - 2

        k_of = np.arange(self.dim, dtype=np.int64) // self.S
        s_of = np.arange(self.dim, dtype=np.int64) % self.S

        # states after moment 0 (H layer) and moment 1 (prep layer)
        amp = 1.0 / np.sqrt(self.K)
        self.state_after_h = np.zeros(self.dim, dtype=complex)
        self.state_after_h.reshape(self.K, self.S)[:, self.S - 1] = amp
        theta = circ.spec.prep_angle
        ry1 = np.array([-np.sin(theta / 2), np.cos(theta / 2)], dtype=complex)
        sysvec = reduce(np.kron, [ry1] * ns)
        self.state_after_prep = np.empty(self.dim, dtype=complex)
        self.state_after_prep.reshape(self.K, self.S)[:] = amp * sysvec[None, :]
        self.ry_matrix = np.array(
            [[np.cos(theta / 2), -np.sin(theta / 2)],
             [np.sin(theta / 2), np.cos(theta / 2)]], dtype=complex
        )

        # cumulative products of the diagonal-moment phase vectors
        self.prefix = np.ones((self.nd + 1, self.dim), dtype=complex)
        self.ref_pos = {}
        for i, moment in enumerate(circ.moments[2:self.qft_start]):
            (gate,) = moment
            if gate.ref_weight:
                self.ref_pos[i] = gate.ref_weight
            self.prefix[i + 1] = self.prefix[i] * self._diag_phase(gate, k_of, s_of)

        self.k_values = np.arange(self.K)
        self.inv_sqrt_K = 1.0 / np.sqrt(self.K)
        self.qft_ops = [
            self._compile_qft_gate(m[0]) for m in circ.moments[self.qft_start:]
        ]

    def _compile_qft_gate(self, gate: Gate):
        """Reshape descriptors for one inverse-QFT gate on the flat state."""
        if gate.name == "h":
            bit = self.ns + gate.qubits[0]
            return ("h", (-1, 2, 1 << bit))
        b = sorted(self.ns + q for q in gate.qubits)
        shape = (-1, 2, 1 << (b[1] - b[0] - 1), 2, 1 << b[0])
        if gate.name == "cphase":
            return ("cp", shape, np.exp(1j * gate.angle))
        if gate.name == "swap":
            return ("swap", shape)
        raise ValueError(f"unexpected QFT gate: {gate.name}")

    def _diag_phase(self, gate: Gate, k_of, s_of) -> np.ndarray:
        ctrl = ((k_of >> gate.qubits[0]) & 1).astype(bool)
        if gate.name == "czphase":
            m = gate.qubits[1] - self.n
            sign = 1 - 2 * ((s_of >> m) & 1)
        elif gate.name == "czzphase":
            m0, m1 = gate.qubits[1] - self.n, gate.qubits[2] - self.n
            sign = (1 - 2 * ((s_of >> m0) & 1)) * (1 - 2 * ((s_of >> m1) & 1))
        else:
            raise ValueError(f"not a diagonal gate: {gate.name}")
        return np.where(ctrl, np.exp(1j * gate.angle * sign), 1.0)

    # -- in-place gate application on the flat state --------------------------

    def qft_full(self, st2: np.ndarray) -> np.ndarray:
        """Whole inverse-QFT block: W_dag[x, k] = exp(-2 pi i x k / K)/sqrt(K)."""
        return np.fft.fft(st2, axis=0) * self.inv_sqrt_K

    def apply_qft_moment(self, state: np.ndarray, idx: int):
        op = self.qft_ops[idx]
        if op[0] == "h":
            v = state.reshape(op[1])
            a = v[:, 0].copy()
            v[:, 0] = (a + v[:, 1]) * _INV_SQRT2
            v[:, 1] = (a - v[:, 1]) * _INV_SQRT2
        elif op[0] == "cp":
            state.reshape(op[1])[:, 1, :, 1] *= op[2]
        else:
            v = state.reshape(op[1])
            tmp = v[:, 0, :, 1].copy()
            v[:, 0, :, 1] = v[:, 1, :, 0]
            v[:, 1, :, 0] = tmp

    def _flat_bit(self, qubit: int) -> int:
        return self.ns + qubit if qubit < self.n else qubit - self.n

    def apply_pauli(self, state: np.ndarray, qubit: int, pauli: int):
        """In-place X (0), Y (1) or Z (2) on a global qubit id."""
        v = state.reshape(-1, 2, 1 << self._flat_bit(qubit))
        if pauli == 2:
            v[:, 1] *= -1.0
        elif pauli == 0:
            tmp = v[:, 0].copy()
            v[:, 0] = v[:, 1]
            v[:, 1] = tmp
        else:
            tmp = v[:, 0].copy()
            v[:, 0] = -1j * v[:, 1]
            v[:, 1] = 1j * tmp

    def apply_ry_layer(self, state: np.ndarray):
        c, s = self.ry_matrix[0, 0].real, self.ry_matrix[1, 0].real
        for m in range(self.ns):
            v = state.reshape(-1, 2, 1 << m)
            a = v[:, 0].copy()
            v[:, 0] = c * a - s * v[:, 1]
            v[:, 1] = s * a + c * v[:, 1]

    def apply_diag_segment(self, state: np.ndarray, a: int, b: int, phi_ref: float):
        """Moments a..b-1 of the diagonal block, including their phi_ref slots."""
        if b > a:
            seg = self.prefix[b] if a == 0 else self.prefix[b] * np.conj(self.prefix[a])
            state *= seg
        if phi_ref != 0.0:
            mask = 0
            for pos, weight in self.ref_pos.items():
                if a <= pos < b:
                    mask |= weight
            if mask:
                col = np.exp(1j * phi_ref * (self.k_values & mask))
                state.reshape(self.K, self.S)[:] *= col[:, None]


def _control_distribution(plan: _Plan, phi_ref: float, events) -> np.ndarray:
    """Exact control-register marginal for one noise realization."""
    if events and events[0][0] == 0:
        state = plan.state_after_h.copy()
        i = 0
        while i < len(events) and events[i][0] == 0:
            plan.apply_pauli(state, events[i][1], events[i][2])
            i += 1
        plan.apply_ry_layer(state)
        events = events[i:]
    else:
        state = plan.state_after_prep.copy()
    while events and events[0][0] == 1:
        plan.apply_pauli(state, events[0][1], events[0][2])
        events = events[1:]

    cursor = 0
    qft_events = []
    for m, q, p in events:
        if m >= plan.qft_start:
            qft_events.append((m, q, p))
            continue
        idx = m - plan.diag_start
        plan.apply_diag_segment(state, cursor, idx + 1, phi_ref)
        plan.apply_pauli(state, q, p)
        cursor = idx + 1
    plan.apply_diag_segment(state, cursor, plan.nd, phi_ref)

    n_qft = len(plan.qft_ops)
    if not qft_events:
        st2 = plan.qft_full(state.reshape(plan.K, plan.S))
    else:
        gidx = 0
        for m, q, p in qft_events:
            local = m - plan.qft_start
            while gidx <= local:
                plan.apply_qft_moment(state, gidx)
                gidx += 1
            plan.apply_pauli(state, q, p)
        while gidx < n_qft:
            plan.apply_qft_moment(state, gidx)
            gidx += 1
        st2 = state.reshape(plan.K, plan.S)
    return (st2.real ** 2 + st2.imag ** 2).sum(axis=1)


def _sample_noise(plan: _Plan, noise: NoiseConfig, rng: np.random.Generator):
    """Draw the error sites of one trajectory: list of (moment, qubit, pauli)."""
    if noise.p_err == 0.0:
        return []
    n_moments = plan.n_moments if noise.noise_during_qft else plan.qft_start
    n_qubits = plan.n + plan.ns
    draws = rng.random((n_moments, n_qubits)) < noise.p_err
    if not draws.any():
        return []
    sites = np.argwhere(draws)
    paulis = rng.integers(0, 3, size=len(sites))
    return [(int(m), int(q), int(p)) for (m, q), p in zip(sites, paulis)]


def run_trajectory(
    circuit: QpeCircuit,
    noise: NoiseConfig,
    phi_ref: float,
    rng: np.random.Generator,
):
    """One noisy shot: returns (x, had_error) with x = wrap(2 pi xt / K - phi_ref)."""
    plan = circuit._plan
    events = _sample_noise(plan, noise, rng)
    probs = _control_distribution(plan, phi_ref, events)
    cum = np.cumsum(probs)
    if abs(cum[-1] - 1.0) > 1e-8:
        raise RuntimeError(f"statevector norm drifted to {cum[-1]}")
    xt = int(np.searchsorted(cum, rng.random() * cum[-1]))
    x = float(wrap(TWO_PI * xt / circuit.K - phi_ref))
    return x, bool(events)


def noiseless_control_distribution(circuit: QpeCircuit, phi_ref: float = 0.0) -> np.ndarray:
    """Exact outcome distribution of the control register with p_err = 0."""
    return _control_distribution(circuit._plan, phi_ref, [])


@dataclass(frozen=True)
class ShotRecord:
    """One accepted sample as emitted to CSV: x, branch, had_error, phi_ref."""

    x: float
    branch: int
    had_error: bool
    phi_ref: float


def _shot_rng(seed: int, shot: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(shot)))


def _one_shot(circuit, noise, rng, require_error=False):
    phi_ref = rng.uniform(0.0, TWO_PI)
    x, fired = run_trajectory(circuit, noise, phi_ref, rng)
    if not require_error:
        return x, fired, phi_ref
    retries = 0
    while not fired:
        retries += 1
        if retries > _PEC_RETRY_BUDGET:
            raise RuntimeError(
                "no error fired within the retry budget; fidelity is too close to 1"
            )
        phi_ref = rng.uniform(0.0, TWO_PI)
        x, fired = run_trajectory(circuit, noise, phi_ref, rng)
    return x, fired, phi_ref


def filtered_sampler(
    circuit: QpeCircuit,
    noise: NoiseConfig,
    interval: PromiseInterval,
    shots: int,
    seed: int,
):
    """Run shots trajectories with fresh reference phases; keep x in interval.

    Returns (records, report); records hold the accepted samples in shot
    order. Each shot uses an independent generator derived from (seed, shot).
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    records = []
    for shot in range(shots):
        rng = _shot_rng(seed, shot)
        x, fired, phi_ref = _one_shot(circuit, noise, rng)
        if interval.contains(x):
            records.append(ShotRecord(x, 0, fired, phi_ref))
    report = FilterReport(requested=shots, total_shots=shots, accepted=len(records))
    return records, report


def filtered_pec_sampler(
    circuit: QpeCircuit,
    noise: NoiseConfig,
    interval: PromiseInterval,
    fidelity: float,
    shots: int,
    seed: int,
):
    """Quasiprobability branch sampler: alpha = [1/F, 1 - 1/F].

    Branch 0 runs a plain noisy trajectory; branch 1 re-runs until a
    trajectory contains at least one error. Accepted samples are split by
    branch; report counts PEC shots (not the branch-1 re-runs).
    """
    if not (0 < fidelity < 1):
        raise ValueError("PEC sampling needs fidelity strictly inside (0, 1)")
    if shots < 1:
        raise ValueError("shots must be at least 1")
    alpha = np.array([1.0 / fidelity, 1.0 - 1.0 / fidelity])
    p_branch1 = abs(alpha[1]) / np.abs(alpha).sum()
    x0, x1 = [], []
    for shot in range(shots):
        rng = _shot_rng(seed, shot)
        branch = int(rng.random() < p_branch1)
        x, fired, phi_ref = _one_shot(circuit, noise, rng, require_error=branch == 1)
        if interval.contains(x):
            (x1 if branch else x0).append(ShotRecord(x, branch, fired, phi_ref))
    report = FilterReport(
        requested=shots, total_shots=shots, accepted=len(x0) + len(x1)
    )
    return x0, x1, report
