"""
The picard subcommand: the fluid path as a Picard fixed point.
"""

from remshare.errors import FloorViolationError
from remshare.fluid import PicardSolver, picard_residual
from remshare.persist import write_json


def register(dispatcher):
    @dispatcher.add_command("picard", "Build the fluid path by windowed Picard iteration.")
    def _picard(define):
        @define
        def picard(ctx):
            config = ctx.require_config()
            params = config.system()
            solver = PicardSolver(params, config.fluid, config.picard, ctx.logger)

            try:
                path, diagnostics = solver.picard_iterate(config.theta_measure())

            except FloorViolationError as err:
                if err.path is not None:
                    err.path.write(ctx.output_dir, ctx.fmt)

                raise

            path.write(ctx.output_dir, ctx.fmt)
            diagnostics["residuals"] = picard_residual(path, params)
            write_json(ctx.path("diagnostics.json"), diagnostics)
