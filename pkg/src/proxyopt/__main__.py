import sys

from proxyopt.cli import main

sys.exit(main())
