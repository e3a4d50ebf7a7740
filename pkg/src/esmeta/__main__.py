import sys

from esmeta.cli import main

sys.exit(main())
