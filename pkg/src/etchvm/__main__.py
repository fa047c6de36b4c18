import sys

from etchvm.cli import main

sys.exit(main())
