import sys

from pvchp.cli import main

sys.exit(main())
