"""Adaptive embedded Runge-Kutta integration for complex ODE systems.

Dormand-Prince 5(4) with standard PI-free step control.  The state is any
complex ndarray; error norms treat real and imaginary parts on equal footing.
A per-step hook lets callers project the accepted state (hermitization, trace
renormalization), which is why the first stage is always recomputed rather
than reusing the FSAL stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StepSizeUnderflow(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"step size underflow at t={t:.12g}")
        self.t = t


class RecoverableRHSError(RuntimeError):
    """RHS failure on a trial stage; the step is rejected and retried smaller.

    Raised e.g. when a trial displacement overflows the overlap exponential.
    A failure on the first stage (the accepted state itself) is fatal.
    """


_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [
        5179 / 57600,
        0.0,
        7571 / 16695,
        393 / 640,
        -92097 / 339200,
        187 / 2100,
        1 / 40,
    ]
)
_ERR = _B5 - _B4


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


@dataclass
class AdaptiveResult:
    t: float
    y: np.ndarray
    n_steps: int
    n_rejected: int
    last_h: float
    n_forced: int = 0


def integrate_to(
    f,
    t0: float,
    t1: float,
    y0: np.ndarray,
    rtol: float = 1e-8,
    atol: float = 1e-8,
    max_step: float = np.inf,
    min_step: float = 0.0,
    first_step: float | None = None,
    step_hook=None,
) -> AdaptiveResult:
    """Integrate dy/dt = f(t, y) from t0 to exactly t1 (t1 > t0).

    ``step_hook(t, y) -> y`` is applied after every accepted step and may
    return a modified state (projection).  Raises StepSizeUnderflow if the
    controller drives h below the resolvable time scale.

    ``min_step`` bounds accuracy-driven shrinking from below: a step at the
    floor is accepted even if the embedded error estimate objects.  This keeps
    strongly regularized problems moving when the estimate is dominated by the
    floating-point roughness of ill-conditioned tangent-space algebra rather
    than by genuine truncation error.  Stages that fail outright (overflow)
    still shrink past the floor.
    """
    if t1 <= t0:
        raise ValueError("integrate_to requires t1 > t0")
    t = t0
    y = np.asarray(y0, dtype=complex).copy()
    span = t1 - t0
    h = first_step if first_step is not None else span / 100.0
    h = min(h, max_step, span)
    n_steps = 0
    n_rejected = 0
    n_forced = 0
    k = [None] * 7
    while t < t1 - 1e-14 * max(abs(t1), 1.0):
        h = min(h, t1 - t, max_step)
        if h < 1e-14 * max(abs(t), 1.0) or h <= 0.0:
            raise StepSizeUnderflow(t)
        k[0] = f(t, y)
        try:
            for i in range(1, 7):
                yi = y + h * sum(
                    aij * k[j] for j, aij in enumerate(_A[i]) if aij != 0.0
                )
                k[i] = f(t + _C[i] * h, yi)
        except RecoverableRHSError:
            n_rejected += 1
            h = 0.2 * h
            continue
        y5 = y + h * sum(b * k[i] for i, b in enumerate(_B5) if b != 0.0)
        err = h * sum(e * k[i] for i, e in enumerate(_ERR) if e != 0.0)
        enorm = _error_norm(err, y, y5, rtol, atol)
        if not np.isfinite(enorm):
            n_rejected += 1
            h = 0.2 * h
            continue
        at_floor = min_step > 0.0 and h <= min_step * (1.0 + 1e-12)
        if enorm <= 1.0 or at_floor:
            if enorm > 1.0:
                n_forced += 1
            t = t + h
            y = y5
            if step_hook is not None:
                y = step_hook(t, y)
            n_steps += 1
            factor = 5.0 if enorm == 0.0 else min(5.0, 0.9 * enorm ** -0.2)
            h = h * max(factor, 0.2)
            if min_step > 0.0:
                h = max(h, min_step)
        else:
            n_rejected += 1
            h = h * max(0.2, 0.9 * enorm ** -0.2)
            if min_step > 0.0:
                h = max(h, min_step)
    return AdaptiveResult(
        t=t1, y=y, n_steps=n_steps, n_rejected=n_rejected, last_h=h,
        n_forced=n_forced,
    )
