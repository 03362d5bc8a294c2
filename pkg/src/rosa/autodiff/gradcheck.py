"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    worst: list[tuple[str, int, float]]  # (param name, flat index, rel error)

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return np.abs(analytic - numeric) / denom


def grad_check(f, params: dict[str, Tensor], h: float = 1e-5,
               tol: float = 1e-4, max_entries_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued ``f()`` against central
    differences over the entries of ``params``.

    ``f`` must be deterministic and rebuild its graph on each call. When
    ``max_entries_per_param`` is given, a random subset of entries is probed
    per parameter (for large layers).
    """
    for p in params.values():
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data):
        raise ValueError("non-finite loss in grad_check")
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    per_param: dict[str, float] = {}
    worst: list[tuple[str, int, float]] = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            idx = np.arange(n)
        numeric = np.zeros(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            for q in params.values():
                q.zero_grad()
            up = f().item()
            flat[i] = orig - h
            for q in params.values():
                q.zero_grad()
            down = f().item()
            flat[i] = orig
            numeric[j] = (up - down) / (2 * h)
            if not np.isfinite(numeric[j]):
                raise ValueError(f"non-finite finite-difference value for {name}[{i}]")
        ana = analytic[name].reshape(-1)[idx]
        errs = _rel_error(ana, numeric)
        per_param[name] = float(errs.max()) if len(errs) else 0.0
        for j in np.argsort(errs)[::-1][:3]:
            worst.append((name, int(idx[j]), float(errs[j])))
    worst.sort(key=lambda t: -t[2])
    max_err = max(per_param.values()) if per_param else 0.0
    for p in params.values():
        p.zero_grad()
    return GradCheckReport(max_rel_error=max_err, per_param=per_param, worst=worst[:10])
