"""
The simulate subcommand: one run of the prelimit queue.
"""

from remshare.simulator import Simulator


def register(dispatcher):
    @dispatcher.add_command("simulate", "Simulate the queue and write its trace.")
    def _simulate(define):
        @define
        def simulate(ctx):
            config = ctx.require_config()
            simulator = Simulator(config.system(), config.sim_config(), ctx.logger)

            trace = simulator.run(config.initial_jobs())
            trace.write(ctx.output_dir, ctx.fmt)

            state = trace.final_state
            print(
                "t={} E={} D={} Z={}".format(
                    state.clock, state.arrivals, state.departures, state.population
                )
            )
