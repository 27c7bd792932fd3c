"""
The scaling-test subcommand.
"""

from remshare.harness import run_scaling


def register(dispatcher):
    @dispatcher.add_command(
        "scaling-test", "Compare scaled simulations against the fluid path over r."
    )
    def _scaling(define):
        @define
        def scaling_test(ctx):
            config = ctx.require_config()
            report = run_scaling(config.experiment(), ctx.logger)
            report.write(ctx.output_dir, ctx.fmt)

            print("verdict: {}".format("nonincreasing" if report.verdict() else "not monotone"))
