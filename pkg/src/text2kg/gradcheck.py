"""Central-difference gradient checking for tape-recorded functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class GradCheckReport:
    """Worst-case comparison between analytic and numerical gradients."""

    max_rel_err: float
    worst_param: str
    worst_index: tuple[int, ...]
    analytic: float
    numerical: float
    n_coords: int
    rtol: float
    passed: bool

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad_check {status}: max_rel_err={self.max_rel_err:.3e} at "
            f"{self.worst_param}[{self.worst_index}] "
            f"(analytic={self.analytic:.6e}, numerical={self.numerical:.6e}, "
            f"{self.n_coords} coordinates, rtol={self.rtol:g})"
        )


def grad_check(
    f: Callable[[], Tensor],
    inputs: Tensor | Sequence[Tensor] | dict[str, Tensor],
    eps: float = 1e-5,
    rtol: float = 1e-5,
    floor: float = 1e-4,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of f() against central finite differences.

    f is a no-argument closure over the given input tensors; it must be
    deterministic across calls. The relative error per coordinate is
    |analytic - numerical| / max(|analytic|, |numerical|, floor); the
    floor keeps finite-difference roundoff on near-zero gradients from
    registering as failure. When max_coords_per_tensor is set, a random
    subset of coordinates per tensor is probed (for large models).
    """
    if isinstance(inputs, Tensor):
        named = {"x": inputs}
    elif isinstance(inputs, dict):
        named = dict(inputs)
    else:
        named = {f"x{i}": t for i, t in enumerate(inputs)}

    for t in named.values():
        t.grad = None
    loss = f()
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in named.items()
    }

    worst = GradCheckReport(0.0, "", (), 0.0, 0.0, 0, rtol, True)
    n_checked = 0
    for name, t in named.items():
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_tensor is not None and flat.size > max_coords_per_tensor:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(flat.size, size=max_coords_per_tensor, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            up = f().item()
            flat[c] = orig - eps
            down = f().item()
            flat[c] = orig
            numerical = (up - down) / (2.0 * eps)
            a = analytic[name].reshape(-1)[c]
            denom = max(abs(a), abs(numerical), floor)
            rel = abs(a - numerical) / denom
            n_checked += 1
            if rel > worst.max_rel_err:
                worst.max_rel_err = rel
                worst.worst_param = name
                worst.worst_index = tuple(np.unravel_index(c, t.shape))
                worst.analytic = float(a)
                worst.numerical = float(numerical)
    worst.n_coords = n_checked
    worst.passed = worst.max_rel_err < rtol
    return worst
