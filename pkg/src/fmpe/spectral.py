"""Spectral, noisy, and filtered phase distributions, plus their samplers.

A spectral distribution is a finite set of eigenphases with probability
weights. Convolving it with a kernel and mixing in a uniform noise floor
gives the noisy density

    p(x) = F * sum_j a_j f(x - phi_j) + (1 - F) / (2 pi),

whose restriction to a promise interval D (normalized) is the filtered
distribution the estimators consume. The uniform floor is the global
depolarizing specialization; trajectory-level local noise lives in `qpesim`.
"""

import io
from dataclasses import dataclass

import numpy as np

from .angles import TWO_PI, wrap
from .kernels import Kernel

__all__ = [
    "SpectralDistribution",
    "PromiseInterval",
    "NoisySpec",
    "FilterReport",
    "promise_interval_from_gap",
    "noisy_pdf",
    "interval_mass",
    "filtered_pdf",
    "acceptance_lower_bound",
    "sample_noisy",
    "filter_samples",
    "qsp_rejection_sample",
]

_MERGE_TOL = 1e-12
_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SpectralDistribution:
    """Discrete eigenphase distribution: wrapped phases with positive weights.

    Degenerate phases (within 1e-12 rad after wrapping) are merged at
    construction with summed weights; weights must total 1 within 1e-9.
    """

    phases: np.ndarray
    weights: np.ndarray

    def __init__(self, phases, weights):
        phases = wrap(np.asarray(phases, dtype=float))
        weights = np.asarray(weights, dtype=float)
        if phases.shape != weights.shape or phases.ndim != 1 or phases.size == 0:
            raise ValueError("phases and weights must be equal-length 1-d arrays")
        if np.any(weights <= 0):
            raise ValueError("all weights must be positive")
        total = weights.sum()
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1 (got {total})")
        order = np.argsort(phases, kind="stable")
        phases, weights = phases[order], weights[order]
        merged_p, merged_w = [phases[0]], [weights[0]]
        for p, w in zip(phases[1:], weights[1:]):
            if p - merged_p[-1] <= _MERGE_TOL:
                merged_w[-1] += w
            else:
                merged_p.append(p)
                merged_w.append(w)
        object.__setattr__(self, "phases", np.array(merged_p))
        object.__setattr__(self, "weights", np.array(merged_w))
        self.phases.setflags(write=False)
        self.weights.setflags(write=False)

    def weight_in(self, interval: "PromiseInterval") -> float:
        """Total weight of the entries inside the interval (a_0 for a promise)."""
        inside = (self.phases >= interval.lo) & (self.phases <= interval.hi)
        return float(self.weights[inside].sum())

    def phase_in(self, interval: "PromiseInterval") -> float:
        """The unique eigenphase inside the interval; error if not unique."""
        inside = (self.phases >= interval.lo) & (self.phases <= interval.hi)
        if inside.sum() != 1:
            raise ValueError("interval must contain exactly one eigenphase")
        return float(self.phases[inside][0])

    def to_text(self) -> str:
        """One `phase,weight` line per entry."""
        return "".join(
            f"{float(p)!r},{float(w)!r}\n" for p, w in zip(self.phases, self.weights)
        )

    @classmethod
    def from_text(cls, text: str) -> "SpectralDistribution":
        phases, weights = [], []
        for line in io.StringIO(text):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            p, w = line.split(",")
            phases.append(float(p))
            weights.append(float(w))
        return cls(phases, weights)


@dataclass(frozen=True)
class PromiseInterval:
    """Filtering interval centered on phi_guess with inner/outer buffers.

    The target phase is promised to lie at least inner_buffer inside the
    interval; every other phase at least outer_buffer outside it. The
    interval itself must not wrap: [lo, hi] within [-pi, pi]. The buffered
    region may extend past the branch cut; it encodes a promise about the
    caller's (wrapped) phases, not a range we integrate over.
    """

    phi_guess: float
    width: float
    inner_buffer: float
    outer_buffer: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not (0 < self.inner_buffer < self.width / 2):
            raise ValueError("inner buffer must lie in (0, width/2)")
        if self.outer_buffer < 0:
            raise ValueError("outer buffer must be non-negative")
        if self.lo < -np.pi or self.hi > np.pi:
            raise ValueError(
                "interval wraps past the +-pi branch cut; shift all phases "
                "by a constant to re-center it"
            )

    @property
    def lo(self) -> float:
        return self.phi_guess - self.width / 2

    @property
    def hi(self) -> float:
        return self.phi_guess + self.width / 2

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.lo) & (x <= self.hi)


def promise_interval_from_gap(phi_guess: float, gap: float) -> PromiseInterval:
    """Promise interval of width gap centered on phi_guess, buffers gap/6.

    Valid whenever the guess is within gap/3 of the target and all other
    phases are at least gap away from it.
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    return PromiseInterval(
        phi_guess=phi_guess,
        width=gap,
        inner_buffer=gap / 6.0,
        outer_buffer=gap / 6.0,
    )


@dataclass(frozen=True)
class NoisySpec:
    """Spectral distribution smeared by a kernel with a uniform noise floor."""

    spectral: SpectralDistribution
    kernel: Kernel
    fidelity: float = 1.0

    def __post_init__(self):
        if not (0 < self.fidelity <= 1):
            raise ValueError("fidelity must lie in (0, 1]")


@dataclass(frozen=True)
class FilterReport:
    """Shot accounting for a filtered sampling run."""

    requested: int
    total_shots: int
    accepted: int

    def __post_init__(self):
        if self.accepted > self.total_shots:
            raise ValueError("accepted cannot exceed total_shots")

    @property
    def empirical_acceptance(self) -> float:
        return self.accepted / self.total_shots if self.total_shots else float("nan")


def noisy_pdf(spec: NoisySpec, x):
    """p(x) = F sum_j a_j f(x - phi_j) + (1 - F) / (2 pi)."""
    x = np.asarray(x, dtype=float)
    shifted = x[..., None] - spec.spectral.phases
    signal = spec.kernel.pdf(shifted) @ spec.spectral.weights
    out = spec.fidelity * signal + (1.0 - spec.fidelity) / TWO_PI
    return out if out.ndim else float(out)


def interval_mass(spec: NoisySpec, interval: PromiseInterval) -> float:
    """Probability that a noisy sample lands inside the interval."""
    signal = sum(
        w * spec.kernel.interval_integral(interval.lo, interval.hi, p)
        for p, w in zip(spec.spectral.phases, spec.spectral.weights)
    )
    floor = (1.0 - spec.fidelity) * interval.width / TWO_PI
    return float(spec.fidelity * signal + floor)


def filtered_pdf(spec: NoisySpec, interval: PromiseInterval, x):
    """Filtered noisy density: p(x) / interval_mass on the interval, 0 outside."""
    mass = interval_mass(spec, interval)
    x = np.asarray(x, dtype=float)
    out = np.where(interval.contains(x), noisy_pdf(spec, x) / mass, 0.0)
    return out if out.ndim else float(out)


def acceptance_lower_bound(spec: NoisySpec, interval: PromiseInterval, gap: float) -> float:
    """Conservative acceptance probability keeping only the in-interval phase.

    Evaluates F a_0 * integral of f over [-gap/3, gap/3] plus the uniform
    floor. Dominated by interval_mass when the guess is within gap/6 of the
    target (the symmetric +-gap/3 window then fits inside the interval).
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    a0 = spec.spectral.weight_in(interval)
    central = spec.kernel.interval_integral(-gap / 3.0, gap / 3.0, 0.0)
    floor = (1.0 - spec.fidelity) * interval.width / TWO_PI
    return float(spec.fidelity * a0 * central + floor)


def sample_noisy(spec: NoisySpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw size samples from the noisy density by mixture sampling."""
    if size < 1:
        raise ValueError("size must be at least 1")
    n_noise = int(rng.binomial(size, 1.0 - spec.fidelity))
    n_signal = size - n_noise
    out = np.empty(size)
    if n_signal:
        which = rng.choice(spec.spectral.phases.size, size=n_signal, p=spec.spectral.weights)
        jitter = spec.kernel.sample(rng, size=n_signal)
        out[:n_signal] = wrap(spec.spectral.phases[which] + jitter)
    if n_noise:
        out[n_signal:] = rng.uniform(-np.pi, np.pi, size=n_noise)
    rng.shuffle(out)
    return out


def filter_samples(samples, interval: PromiseInterval):
    """Keep exactly the samples inside the interval, preserving order."""
    samples = np.asarray(samples, dtype=float)
    kept = samples[interval.contains(samples)]
    report = FilterReport(
        requested=samples.size, total_shots=samples.size, accepted=kept.size
    )
    return kept, report


def qsp_rejection_sample(
    spec: NoisySpec,
    interval: PromiseInterval,
    rng: np.random.Generator,
    size: int,
):
    """Filtered sampling the signal-processing way: propose uniformly on the
    interval, accept with probability p(x) / max_phi f(phi).

    Accepted samples follow the filtered distribution; the expected shot
    overhead is interval.width * max_pdf / interval mass. The noise floor
    enters the acceptance probability with weight (1 - F), mirroring the
    noisy density.
    """
    if size < 0:
        raise ValueError("size must be non-negative")
    peak = spec.kernel.max_pdf()
    mean_acc = max(interval_mass(spec, interval) / (interval.width * peak), 1e-3)
    samples = np.empty(size)
    got = 0
    total = 0
    while got < size:
        batch = max(int((size - got) / mean_acc * 1.2), 16)
        xs = rng.uniform(interval.lo, interval.hi, size=batch)
        acc_idx = np.flatnonzero(rng.random(batch) < noisy_pdf(spec, xs) / peak)
        take = min(acc_idx.size, size - got)
        samples[got:got + take] = xs[acc_idx[:take]]
        got += take
        # count only the shots actually consumed to reach the last acceptance
        total += batch if got < size else int(acc_idx[take - 1]) + 1
    report = FilterReport(requested=size, total_shots=total, accepted=got)
    return samples, report
