import sys

from stac.cli import main

sys.exit(main())
