import sys

from policymc.cli import main

sys.exit(main())
