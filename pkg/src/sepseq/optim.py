"""Parameter storage, Adam, and the finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .autodiff import Tensor
from .errors import ShapeMismatch


class ParameterStore:
    """Named float64 parameter tensors with lexicographic iteration order.

    Shapes are fixed at insertion; values mutate in place (the optimizer
    owns mutation). Iteration, serialization and gradient collection all walk
    names in sorted order so every consumer sees the same layout.
    """

    def __init__(self, tensors: Mapping[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        if tensors:
            for name in sorted(tensors):
                self.add(name, tensors[name])

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter {name!r}")
        tensor.requires_grad = True
        self._tensors[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._tensors[name]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: t.data.shape for name, t in self.items()}

    def total_size(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Collected gradients; missing/unused parameters get zeros."""
        out = {}
        for name, t in self.items():
            out[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        return out

    def to_blob(self) -> bytes:
        """Little-endian float64 of every parameter, lexicographic order."""
        chunks = [t.data.astype("<f8").tobytes() for _, t in self.items()]
        return b"".join(chunks)

    @classmethod
    def from_blob(cls, blob: bytes, shapes: Mapping[str, tuple[int, ...]]) -> "ParameterStore":
        store = cls()
        offset = 0
        for name in sorted(shapes):
            shape = tuple(shapes[name])
            size = int(np.prod(shape)) if shape else 1
            raw = blob[offset : offset + 8 * size]
            if len(raw) != 8 * size:
                raise ShapeMismatch(f"blob too short for parameter {name!r}")
            values = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            store.add(name, Tensor(values.copy()))
            offset += 8 * size
        if offset != len(blob):
            raise ShapeMismatch("blob longer than the declared parameters")
        return store

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for name, t in self.items():
            out.add(name, Tensor(t.data.copy()))
        return out


@dataclass
class AdamState:
    """Adam moments and step counter; hyperparameters ride along."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterStore, lr: float = 0.001, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, t in params.items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state


def adam_step(
    params: ParameterStore,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[ParameterStore, AdamState]:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"grad for {name!r}: {g.shape} vs {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return float(norm)


@dataclass
class GradCheckProbe:
    name: str
    flat_index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: GradCheckProbe | None
    probes: list[GradCheckProbe]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = "-" if self.worst is None else f"{self.worst.name}[{self.worst.flat_index}]"
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} over "
            f"{len(self.probes)} probes (tolerance {self.tolerance:.1e}, worst {worst})"
        )


def grad_check(
    loss_fn: Callable[[ParameterStore], Tensor],
    params: ParameterStore,
    tolerance: float = 1e-4,
    probe_count: int = 100,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must be deterministic and return a scalar Tensor. For each of
    ``probe_count`` randomly chosen scalar parameters the numeric gradient is
    (f(p+h) - f(p-h)) / 2h with h = 1e-6 * max(1, |p|); the relative error is
    |a - d| / max(|a|, |d|, 1e-12).
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    params.zero_grads()
    loss_fn(params).backward()
    analytic = params.grads()

    names = params.names()
    sizes = np.array([params[n].data.size for n in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_choices = rng.choice(total, size=min(probe_count, total), replace=False)
    bounds = np.cumsum(sizes)

    probes: list[GradCheckProbe] = []
    for flat in sorted(int(c) for c in flat_choices):
        which = int(np.searchsorted(bounds, flat, side="right"))
        name = names[which]
        local = flat - (0 if which == 0 else int(bounds[which - 1]))
        data = params[name].data
        idx = np.unravel_index(local, data.shape) if data.shape else ()
        theta = data[idx] if data.shape else float(data)
        h = 1e-6 * max(1.0, abs(float(theta)))

        data[idx] = theta + h
        f_plus = loss_fn(params).item()
        data[idx] = theta - h
        f_minus = loss_fn(params).item()
        data[idx] = theta

        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[name][idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        probes.append(GradCheckProbe(name, local, a, numeric, rel))

    worst = max(probes, key=lambda p: p.rel_error)
    return GradCheckReport(worst.rel_error, worst, probes, tolerance)
