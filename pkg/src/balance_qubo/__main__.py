import sys

from balance_qubo.cli import main

sys.exit(main())
