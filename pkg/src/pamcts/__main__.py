import sys

from pamcts.cli import main

sys.exit(main())
