"""Allow `python -m stylesearch` as an alias for the console script."""

import sys

from stylesearch.cli import main

if __name__ == "__main__":
    sys.exit(main())
