"""
Solves the fluid path of heavy_traffic.conf both ways, then checks
that scaled simulations close in on it as r grows.
"""

import logging

from remshare.config import parse_config
from remshare.fluid import FluidSolver, PicardSolver, picard_residual
from remshare.harness import run_scaling
from remshare.measure import path_distance

logging.basicConfig(level=logging.INFO)

CONFIG = parse_config(open("heavy_traffic.conf").read())
PARAMS = CONFIG.system()
THETA = CONFIG.theta_measure()

direct = FluidSolver(PARAMS, CONFIG.fluid).solve_direct(THETA)
picard, diagnostics = PicardSolver(PARAMS, CONFIG.fluid, CONFIG.picard).picard_iterate(THETA)

print("workload at t=1: {:.6f}".format(direct.terminal.workload()))
print("picard iterations: {}".format(diagnostics["iterations"]))
print("picard vs direct: {:.3g}".format(path_distance(picard, direct)))

for name, residual in sorted(picard_residual(direct, PARAMS).items()):
    print("residual {}: {:.3g}".format(name, residual))

report = run_scaling(CONFIG.experiment())

for checkpoint, per_r in sorted(report.medians().items()):
    print(
        "t={}: ".format(checkpoint)
        + ", ".join("r={} {:.4f}".format(r, value) for r, value in sorted(per_r.items()))
    )

print("nonincreasing in r: {}".format(report.verdict()))
