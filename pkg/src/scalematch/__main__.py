import sys

from scalematch.cli import main

sys.exit(main())
