"""
The fluid subcommand: the fluid path by direct integration.
"""

from remshare.errors import FloorViolationError
from remshare.fluid import FluidSolver, picard_residual
from remshare.persist import write_json


def register(dispatcher):
    @dispatcher.add_command("fluid", "Solve the fluid path from theta by direct integration.")
    def _fluid(define):
        @define
        def fluid(ctx):
            config = ctx.require_config()
            params = config.system()
            theta = config.theta_measure()
            solver = FluidSolver(params, config.fluid, ctx.logger)

            try:
                path = solver.solve_direct(theta)

            except FloorViolationError as err:
                # the path up to the floor is still worth keeping
                if err.path is not None:
                    err.path.write(ctx.output_dir, ctx.fmt)

                raise

            path.write(ctx.output_dir, ctx.fmt)
            write_json(
                ctx.path("diagnostics.json"),
                {
                    "steps": len(path) - 1,
                    "floor": solver.floor_for(theta),
                    "atoms": len(path.terminal),
                    "residuals": picard_residual(path, params),
                },
            )
