import sys

from remshare.cli import main

sys.exit(main())
