"""Session-scoped pipeline cache shared by the acceptance suite.

The heavy artifacts (full-order trajectories, POD bases, hyper-reduced
operators, reduced runs) are computed once per preset/configuration and
reused across criteria.
"""

import time

import numpy as np
import pytest

from esdg import fom as fom_mod
from esdg import hyperreduction as hr_mod
from esdg import pod as pod_mod
from esdg import presets
from esdg import rom as rom_mod


class PipelineLab:
    """Memoized FOM -> POD -> hyper-reduction -> ROM pipeline runner."""

    def __init__(self):
        self._cache = {}

    def _memo(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    # -- full-order runs ---------------------------------------------------

    def fom_run(self, preset):
        def build():
            config = presets.load_config(preset)
            law, ops = presets.build_operators(config)
            u0 = presets.initial_state(config, law, ops)
            rule = presets.boundary_rule(config, law, ops)
            problem = fom_mod.FomProblem(law, ops, epsilon=config.epsilon,
                                         boundary_state=rule)
            start = time.perf_counter()
            result = fom_mod.run_fom(problem, u0, config.t_final,
                                     rtol=config.rtol, atol=config.atol,
                                     frames=config.frames)
            elapsed = time.perf_counter() - start
            return {"config": config, "law": law, "ops": ops, "u0": u0,
                    "rule": rule, "problem": problem, "result": result,
                    "wall_time": elapsed}
        return self._memo(("fom", preset), build)

    # -- offline artifacts ---------------------------------------------------

    def singular_values(self, preset, enrich=True):
        def build():
            run = self.fom_run(preset)
            snaps = pod_mod.build_snapshots(run["result"].states,
                                            run["law"], enrich=enrich)
            sqrt_w = np.sqrt(run["ops"].mass)
            return np.linalg.svd(sqrt_w[:, None] * snaps, compute_uv=False)
        return self._memo(("sigma", preset, enrich), build)

    def basis(self, preset, modes, enrich=True):
        def build():
            run = self.fom_run(preset)
            snaps = pod_mod.build_snapshots(run["result"].states,
                                            run["law"], enrich=enrich)
            basis, _ = pod_mod.weighted_pod(snaps, run["ops"].mass, modes)
            return basis
        return self._memo(("basis", preset, modes, enrich), build)

    def hyperreduction(self, preset, modes):
        def build():
            run = self.fom_run(preset)
            residual = pod_mod.energy_residual(
                self.singular_values(preset))[modes - 1]
            tol = presets.hyperreduction_tolerance(run["config"], residual)
            return hr_mod.build_hyperreduction(
                run["ops"], self.basis(preset, modes), tol=tol)
        return self._memo(("hr", preset, modes), build)

    # -- reduced runs -----------------------------------------------------------

    def rom_run(self, preset, modes, *, hyper=True, es_viscosity=False):
        def build():
            run = self.fom_run(preset)
            config = run["config"]
            hrops = self.hyperreduction(preset, modes) if hyper else None
            problem = rom_mod.RomProblem(
                run["law"], run["ops"], self.basis(preset, modes),
                hrops=hrops, epsilon=config.epsilon,
                boundary_state=run["rule"], es_viscosity=es_viscosity)
            a0 = rom_mod.project_state(problem, run["u0"])
            start = time.perf_counter()
            result = rom_mod.run_rom(problem, a0, config.t_final,
                                     rtol=config.rtol, atol=config.atol,
                                     frames=config.frames)
            elapsed = time.perf_counter() - start
            return {"problem": problem, "result": result,
                    "wall_time": elapsed}
        return self._memo(("rom", preset, modes, hyper, es_viscosity), build)

    def rom_error(self, preset, modes, *, hyper=True):
        """Relative L2 error of the final reduced frame against the FOM."""
        run = self.fom_run(preset)
        red = self.rom_run(preset, modes, hyper=hyper)
        law, ops = run["law"], run["ops"]
        u_fom = run["result"].states[-1].reshape(law.n, ops.num_nodes)
        u_rom = rom_mod.lift(
            red["problem"],
            red["result"].states[-1].reshape(law.n, modes))
        return rom_mod.relative_l2_error(u_fom, u_rom, ops.mass)


@pytest.fixture(scope="session")
def lab():
    return PipelineLab()
