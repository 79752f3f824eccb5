import sys

from kff.cli import main

sys.exit(main())
