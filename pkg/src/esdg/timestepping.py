"""Adaptive explicit time integration with admissibility-aware stepping.

Wraps scipy's embedded Runge-Kutta 5(4) pair.  When a right-hand-side
evaluation hits an inadmissible state during a trial step, the wrapper
returns NaN so the controller rejects the step and retries with a
smaller one; an inadmissible *accepted* state (i.e. the failure
persists down to the minimum step size) raises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import RK45

from .physics import InadmissibleStateError

__all__ = ["IntegrationResult", "integrate"]

#: Number of equally spaced output frames stored per run.
DEFAULT_FRAMES = 400

#: Fraction of the final time below which the step size counts as underflow.
MIN_STEP_FRACTION = 1e-13


@dataclass
class IntegrationResult:
    """Sampled solution of an ODE system.

    ``states`` holds one flattened state per row, sampled at ``times``
    via the integrator's dense output.  ``steps_accepted`` counts
    accepted (not attempted) steps.
    """

    times: np.ndarray            # (frames,)
    states: np.ndarray           # (frames, ndof)
    steps_accepted: int
    rhs_evaluations: int


def integrate(rhs, u0, t_final, *, rtol=1e-7, atol=1e-9,
              frames=DEFAULT_FRAMES) -> IntegrationResult:
    """Integrate du/dt = rhs(t, u) over [0, t_final].

    ``rhs`` may raise :class:`InadmissibleStateError`; the error is
    converted into a rejected trial step unless it occurs on the very
    first evaluation or persists at the smallest admissible step size.
    """
    u0 = np.asarray(u0, dtype=float).ravel()
    if t_final <= 0.0:
        raise ValueError("t_final must be positive")

    state = {"calls": 0, "last_error": None}

    def guarded(t, y):
        state["calls"] += 1
        try:
            out = rhs(t, y)
        except InadmissibleStateError as err:
            if state["calls"] == 1:
                raise
            state["last_error"] = err
            return np.full_like(y, np.nan)
        state["last_error"] = None
        return np.asarray(out, dtype=float).ravel()

    solver = RK45(guarded, 0.0, u0, t_final, rtol=rtol, atol=atol)
    frame_times = np.linspace(0.0, t_final, frames)
    states = np.empty((frames, u0.size))
    states[0] = u0
    next_frame = 1
    steps = 0
    min_step = MIN_STEP_FRACTION * t_final

    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            break
        steps += 1
        if solver.step_size is not None and solver.step_size < min_step:
            break
        interp = solver.dense_output()
        while next_frame < frames and frame_times[next_frame] <= solver.t:
            states[next_frame] = interp(frame_times[next_frame])
            next_frame += 1

    if solver.status != "finished":
        detail = f"; last failure: {state['last_error']}" \
            if state["last_error"] is not None else ""
        raise RuntimeError(
            f"time integration stalled at t = {solver.t:.6g} "
            f"(step size underflow below {min_step:.3g}){detail}")
    while next_frame < frames:
        states[next_frame] = solver.y
        next_frame += 1
    return IntegrationResult(times=frame_times, states=states,
                             steps_accepted=steps,
                             rhs_evaluations=state["calls"])
