"""
The distance subcommand: bl_distance between two measure files.
"""

from remshare.errors import MeasureError
from remshare.measure import file_distance
from remshare.persist import format_number, write_json


def _arguments(parser):
    parser.add_argument("measures", nargs=2, metavar="MEASURE_CSV", help="measure files to compare")


def register(dispatcher):
    @dispatcher.add_command(
        "distance", "Print the bounded-Lipschitz distance of two measure files.", _arguments
    )
    def _distance(define):
        @define
        def distance(ctx):
            first, second = ctx.args.measures
            texts = []

            for path in (first, second):
                try:
                    with open(path) as source:
                        texts.append(source.read())

                except OSError as err:
                    raise MeasureError("Cannot read {}: {}".format(path, err))

            value = file_distance(*texts)
            write_json(ctx.path("distance.json"), {"measures": [first, second], "distance": value})
            print(format_number(value))
