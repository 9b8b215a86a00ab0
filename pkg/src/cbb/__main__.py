import sys

from cbb.cli import main

sys.exit(main())
