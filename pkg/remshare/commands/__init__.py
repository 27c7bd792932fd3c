"""
The remshare subcommands, one module each.

Every module exposes register(dispatcher), which adds its
subcommand through Dispatcher.add_command.
"""

from remshare.commands import distance, fluid, picard, scaling, simulate

COMMAND_MODULES = (simulate, fluid, picard, scaling, distance)


def register_all(dispatcher):
    for module in COMMAND_MODULES:
        module.register(dispatcher)
