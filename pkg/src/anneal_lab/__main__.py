import sys

from anneal_lab.cli import main

sys.exit(main())
